use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{input, Result};

/// Added to both covariances when either is singular.
const REGULARIZER: f64 = 1e-6;

fn moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mu = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mu, cov)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn is_singular(cov: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(symmetrize(cov)).eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    eig.iter().any(|&l| l <= 1e-12 * max.max(1.0))
}

/// Fréchet distance between Gaussians fitted to the rows of each matrix.
///
/// `Tr((S_r S_g)^{1/2})` is computed from the eigenvalues of the symmetric
/// matrix `S_r^{1/2} S_g S_r^{1/2}`, with negative roundoff clipped to zero.
pub fn fed(real: &DMatrix<f64>, generated: &DMatrix<f64>) -> Result<f64> {
    let d = real.ncols();
    if generated.ncols() != d {
        return input(format!(
            "embedding dimensions differ: {d} vs {}",
            generated.ncols()
        ));
    }
    if d == 0 {
        return input("embeddings have zero dimension");
    }
    for (name, m) in [("real", real), ("generated", generated)] {
        if m.nrows() < d + 1 {
            return input(format!(
                "{name} set has {} rows; need at least {}",
                m.nrows(),
                d + 1
            ));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return input(format!("{name} embeddings contain non-finite values"));
        }
    }
    let (mu_r, mut cov_r) = moments(real);
    let (mu_g, mut cov_g) = moments(generated);
    if is_singular(&cov_r) || is_singular(&cov_g) {
        let eps = DMatrix::identity(d, d) * REGULARIZER;
        cov_r += &eps;
        cov_g += &eps;
    }
    let root_r = sqrt_psd(&cov_r);
    let inner = symmetrize(&(&root_r * &cov_g * &root_r));
    let tr_cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let diff = mu_r - mu_g;
    let value = diff.dot(&diff) + cov_r.trace() + cov_g.trace() - 2.0 * tr_cross;
    Ok(value.max(0.0))
}

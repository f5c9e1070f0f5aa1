use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Sequence, Vocab, BOS, EOS, NUM_RESERVED, PAD};
use crate::error::{input, Result};
use crate::genmodel::GenModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    PpmiSvd,
    NeuralLmMean,
}

/// Token vectors; a sentence is embedded as the mean of its token vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub kind: EmbeddingKind,
    /// One row per vocabulary id.
    rows: Vec<Vec<f64>>,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, id: u32) -> &[f64] {
        &self.rows[id as usize]
    }

    /// Factorize the positive PMI matrix of windowed co-occurrence counts.
    ///
    /// Vectors are `U_k sqrt(S_k)` for the top `dim` singular triplets, with
    /// each column's sign fixed so that its largest-magnitude entry is
    /// positive. `dim` is capped at the number of corpus tokens.
    pub fn fit_ppmi_svd(vocab: &Vocab, corpus: &Corpus, dim: usize, window: usize) -> Result<Self> {
        corpus.check_vocab(vocab)?;
        if dim == 0 || window == 0 {
            return input("embedding dimension and window must be positive");
        }
        let v = vocab.len();
        let mut counts = DMatrix::<f64>::zeros(v, v);
        for s in corpus {
            let ids = s.ids();
            for (i, &a) in ids.iter().enumerate() {
                for &b in ids.iter().skip(i + 1).take(window) {
                    counts[(a as usize, b as usize)] += 1.0;
                    counts[(b as usize, a as usize)] += 1.0;
                }
            }
        }
        let row_sums: Vec<f64> = (0..v).map(|i| counts.row(i).sum()).collect();
        let total: f64 = row_sums.iter().sum();
        let mut ppmi = DMatrix::<f64>::zeros(v, v);
        if total > 0.0 {
            for i in 0..v {
                for j in 0..v {
                    let c = counts[(i, j)];
                    if c > 0.0 {
                        ppmi[(i, j)] = (c * total / (row_sums[i] * row_sums[j])).ln().max(0.0);
                    }
                }
            }
        }
        let dim = dim.min(v - NUM_RESERVED);
        let eig = SymmetricEigen::new(ppmi);
        let mut order: Vec<usize> = (0..v).collect();
        // singular values of a symmetric matrix are |eigenvalues|
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .abs()
                .total_cmp(&eig.eigenvalues[a].abs())
                .then(a.cmp(&b))
        });
        let mut rows = vec![vec![0.0; dim]; v];
        for (k, &col) in order.iter().take(dim).enumerate() {
            let vec = eig.eigenvectors.column(col);
            let pivot = (0..v)
                .max_by(|&a, &b| vec[a].abs().total_cmp(&vec[b].abs()).then(b.cmp(&a)))
                .unwrap_or(0);
            let sign = if vec[pivot] < 0.0 { -1.0 } else { 1.0 };
            let scale = eig.eigenvalues[col].abs().sqrt() * sign;
            for (i, row) in rows.iter_mut().enumerate() {
                row[k] = vec[i] * scale;
            }
        }
        Ok(EmbeddingModel {
            kind: EmbeddingKind::PpmiSvd,
            rows,
        })
    }

    /// Use the learned input embeddings of a neural generator.
    pub fn from_generator(model: &GenModel) -> Result<Self> {
        match model.embeddings() {
            Some(rows) if !rows.is_empty() => Ok(EmbeddingModel {
                kind: EmbeddingKind::NeuralLmMean,
                rows,
            }),
            _ => input("generator has no embedding table"),
        }
    }

    /// Mean of the token vectors, skipping BOS, EOS and PAD.
    pub fn embed_sequence(&self, seq: &Sequence) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut n = 0usize;
        for &t in seq.ids() {
            if t == BOS || t == EOS || t == PAD {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(t)) {
                *o += x;
            }
            n += 1;
        }
        if n > 0 {
            out.iter_mut().for_each(|o| *o /= n as f64);
        }
        out
    }
}

/// Sentence vectors, one row per sequence.
pub fn embed(samples: &Corpus, em: &EmbeddingModel) -> DMatrix<f64> {
    let d = em.dim();
    let mut m = DMatrix::zeros(samples.len(), d);
    for (i, s) in samples.iter().enumerate() {
        for (j, x) in em.embed_sequence(s).into_iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MarkovSource, Split};
    use crate::rng::seeded;

    fn fitted() -> (Vocab, Corpus, EmbeddingModel) {
        let src = MarkovSource::new(
            vec![0.5, 0.3, 0.2],
            vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.7, 0.2, 0.1]],
            4,
        )
        .unwrap();
        let vocab = src.vocab();
        let corpus = src.synth(500, &mut seeded(1), Split::Train).unwrap();
        let em = EmbeddingModel::fit_ppmi_svd(&vocab, &corpus, 64, 2).unwrap();
        (vocab, corpus, em)
    }

    #[test]
    fn shape_and_determinism() {
        let (vocab, corpus, em) = fitted();
        assert_eq!(em.dim(), 3);
        let m = embed(&corpus, &em);
        assert_eq!(m.shape(), (corpus.len(), 3));
        assert!(m.iter().all(|x| x.is_finite()));
        let again = EmbeddingModel::fit_ppmi_svd(&vocab, &corpus, 64, 2).unwrap();
        assert_eq!(em, again);
        let s = &corpus.sequences()[0];
        assert_eq!(em.embed_sequence(s), em.embed_sequence(&s.clone()));
    }

    #[test]
    fn singleton_sentence_is_its_token_row() {
        let (vocab, _, em) = fitted();
        let id = vocab.lookup("b").unwrap();
        let s = Sequence::new(vec![id]).unwrap();
        assert_eq!(em.embed_sequence(&s), em.row(id));
        let with_eos = Sequence::new(vec![id, EOS]).unwrap();
        assert_eq!(em.embed_sequence(&with_eos), em.row(id));
    }

    #[test]
    fn neural_rows_are_copied() {
        use crate::genmodel::{train_mle, GenConfig, NeuralConfig};
        let (vocab, corpus, _) = fitted();
        let cfg = GenConfig::Neural(NeuralConfig {
            embed_dim: 5,
            hidden_dim: 4,
            max_epochs: 1,
            ..Default::default()
        });
        let (model, _) = train_mle(&vocab, &corpus, &corpus, &cfg, 3).unwrap();
        let em = EmbeddingModel::from_generator(&model).unwrap();
        assert_eq!(em.kind, EmbeddingKind::NeuralLmMean);
        assert_eq!(em.dim(), 5);
        assert_eq!(em.row(4), model.embeddings().unwrap()[4].as_slice());
    }
}

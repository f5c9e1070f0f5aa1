//! Seeded random streams.
//!
//! Every stochastic operation takes a [`SeedRng`]. Independent streams for
//! pipeline stages are derived from one master seed with [`derive_seed`].

use rand::SeedableRng;
use sha2::{Digest, Sha256};

pub type SeedRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SeedRng {
    SeedRng::seed_from_u64(seed)
}

/// Hash `(master, stage, index)` into a child seed.
pub fn derive_seed(master: u64, stage: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((stage.len() as u64).to_le_bytes());
    h.update(stage.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn derived(master: u64, stage: &str, index: u64) -> SeedRng {
    seeded(derive_seed(master, stage, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stage_and_index() {
        let a = derive_seed(7, "disc", 0);
        assert_eq!(a, derive_seed(7, "disc", 0));
        assert_ne!(a, derive_seed(7, "disc", 1));
        assert_ne!(a, derive_seed(7, "gen", 0));
        assert_ne!(a, derive_seed(8, "disc", 0));
    }
}

/// Draw an index from a categorical distribution by inverse CDF.
///
/// `probs` need not be exactly normalised; the last non-zero entry absorbs
/// roundoff.
pub fn sample_categorical<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

use serde::{Deserialize, Serialize};

use super::{Corpus, Sequence, Split, Vocab, NUM_RESERVED};
use crate::error::{input, Result};
use crate::rng::{sample_categorical, SeedRng};

const STOCHASTIC_TOL: f64 = 1e-9;

/// First-order Markov chain emitting fixed-length sequences. State `k` is
/// token id `4 + k` in [`MarkovSource::vocab`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkovFile", into = "MarkovFile")]
pub struct MarkovSource {
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    length: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkovFile {
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    length: usize,
}

impl TryFrom<MarkovFile> for MarkovSource {
    type Error = crate::Error;
    fn try_from(f: MarkovFile) -> Result<Self> {
        MarkovSource::new(f.initial, f.transition, f.length)
    }
}

impl From<MarkovSource> for MarkovFile {
    fn from(m: MarkovSource) -> Self {
        MarkovFile {
            initial: m.initial,
            transition: m.transition,
            length: m.length,
        }
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return input(format!("{what} has a negative or non-finite entry"));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return input(format!("{what} sums to {total}, not 1"));
    }
    Ok(())
}

impl MarkovSource {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>, length: usize) -> Result<Self> {
        let k = initial.len();
        if k == 0 {
            return input("Markov source needs at least one state");
        }
        if length == 0 {
            return input("Markov source length must be at least 1");
        }
        if transition.len() != k || transition.iter().any(|r| r.len() != k) {
            return input(format!("transition matrix must be {k}x{k}"));
        }
        check_distribution(&initial, "initial distribution")?;
        for (i, row) in transition.iter().enumerate() {
            check_distribution(row, &format!("transition row {i}"))?;
        }
        Ok(MarkovSource {
            initial,
            transition,
            length,
        })
    }

    /// Uniform initial and transition distributions over `states`.
    pub fn uniform(states: usize, length: usize) -> Result<Self> {
        let p = 1.0 / states as f64;
        MarkovSource::new(vec![p; states], vec![vec![p; states]; states], length)
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Symbols `a`, `b`, ... (or `s0`, `s1`, ... beyond 26 states).
    pub fn vocab(&self) -> Vocab {
        let k = self.states();
        let names: Vec<String> = (0..k)
            .map(|i| {
                if k <= 26 {
                    ((b'a' + i as u8) as char).to_string()
                } else {
                    format!("s{i}")
                }
            })
            .collect();
        Vocab::from_tokens(names).expect("generated symbols are distinct")
    }

    fn state_of(&self, id: u32) -> Option<usize> {
        let s = (id as usize).checked_sub(NUM_RESERVED)?;
        (s < self.states()).then_some(s)
    }

    /// Probability of the next state given the previous one (`None` at the
    /// start), indexed by state.
    pub fn next_state_probs(&self, prev_id: Option<u32>) -> Option<&[f64]> {
        match prev_id {
            None => Some(&self.initial),
            Some(id) => self.state_of(id).map(|s| self.transition[s].as_slice()),
        }
    }

    /// `initial[x1] * prod transition[x_{t-1}][x_t]`; zero for sequences of the
    /// wrong length or containing non-state ids.
    pub fn exact_prob(&self, seq: &Sequence) -> f64 {
        if seq.len() != self.length {
            return 0.0;
        }
        let mut prev: Option<usize> = None;
        let mut p = 1.0;
        for &id in seq.ids() {
            let Some(s) = self.state_of(id) else {
                return 0.0;
            };
            p *= match prev {
                None => self.initial[s],
                Some(q) => self.transition[q][s],
            };
            prev = Some(s);
        }
        p
    }

    pub fn sample(&self, rng: &mut SeedRng) -> Sequence {
        let mut ids = Vec::with_capacity(self.length);
        let mut state = sample_categorical(&self.initial, rng);
        ids.push((state + NUM_RESERVED) as u32);
        for _ in 1..self.length {
            state = sample_categorical(&self.transition[state], rng);
            ids.push((state + NUM_RESERVED) as u32);
        }
        Sequence::new(ids).expect("length >= 1")
    }

    /// `n` i.i.d. sequences.
    pub fn synth(&self, n: usize, rng: &mut SeedRng, split: Split) -> Result<Corpus> {
        Corpus::new((0..n).map(|_| self.sample(rng)).collect(), split)
    }

    /// Entropy rate in nats per token of the stationary chain; the source
    /// must be started in its stationary law for this to describe whole
    /// sequences.
    pub fn entropy_rate(&self) -> f64 {
        let pi = self.stationary();
        let mut h = 0.0;
        for (i, row) in self.transition.iter().enumerate() {
            for &p in row {
                if p > 0.0 {
                    h -= pi[i] * p * p.ln();
                }
            }
        }
        h
    }

    /// Stationary distribution by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let k = self.states();
        let mut pi = vec![1.0 / k as f64; k];
        for _ in 0..10_000 {
            let mut next = vec![0.0; k];
            for (i, row) in self.transition.iter().enumerate() {
                for (j, &p) in row.iter().enumerate() {
                    next[j] += pi[i] * p;
                }
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-15 {
                break;
            }
        }
        pi
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn seq(ids: &[u32]) -> Sequence {
        Sequence::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn uniform_three_state_pairs() {
        let m = MarkovSource::uniform(3, 2).unwrap();
        for a in 4..7 {
            for b in 4..7 {
                assert!((m.exact_prob(&seq(&[a, b])) - 1.0 / 9.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_chain() {
        let m = MarkovSource::new(vec![1.0, 0.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]], 3).unwrap();
        let v = m.vocab();
        assert_eq!(m.exact_prob(&v.encode("a b a", 10).unwrap()), 1.0);
        assert_eq!(m.exact_prob(&v.encode("a a a", 10).unwrap()), 0.0);
        assert_eq!(m.exact_prob(&v.encode("a b", 10).unwrap()), 0.0);
        let mut rng = seeded(3);
        for _ in 0..20 {
            assert_eq!(v.decode(&m.sample(&mut rng)), "a b a");
        }
    }

    #[test]
    fn designed_chain_sums_to_one_over_81_sequences() {
        let m = MarkovSource::new(
            vec![0.5, 0.3, 0.2],
            vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.7, 0.2, 0.1]],
            4,
        )
        .unwrap();
        // enumerate every length-4 sequence over 3 states
        let mut total = 0.0;
        let mut count = 0;
        for code in 0..81u32 {
            let ids: Vec<u32> = (0..4).map(|t| 4 + (code / 3u32.pow(3 - t)) % 3).collect();
            total += m.exact_prob(&seq(&ids));
            count += 1;
        }
        assert_eq!(count, 81);
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
    }

    #[test]
    fn rejects_invalid_matrices() {
        assert!(MarkovSource::new(vec![0.5, 0.5], vec![vec![1.0, 0.0]], 2).is_err());
        assert!(MarkovSource::new(vec![0.5, 0.6], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 2).is_err());
        assert!(MarkovSource::new(vec![1.5, -0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 2).is_err());
        assert!(MarkovSource::new(vec![1.0, 0.0], vec![vec![0.9, 0.0], vec![0.0, 1.0]], 2).is_err());
        assert!(MarkovSource::new(vec![1.0], vec![vec![1.0]], 0).is_err());
        let bad = r#"{"initial":[1.0],"transition":[[0.5]],"length":2}"#;
        assert!(serde_json::from_str::<MarkovSource>(bad).is_err());
    }

    #[test]
    fn empirical_frequencies_track_exact_probs() {
        let m = MarkovSource::new(vec![0.7, 0.3], vec![vec![0.2, 0.8], vec![0.5, 0.5]], 2).unwrap();
        let mut rng = seeded(11);
        let c = m.synth(50_000, &mut rng, Split::Train).unwrap();
        let target = seq(&[4, 5]);
        let hits = c.iter().filter(|s| **s == target).count() as f64 / 50_000.0;
        assert!((hits - 0.56).abs() < 0.01, "{hits}");
    }
}

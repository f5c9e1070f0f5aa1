use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Sequence};
use crate::error::{input, Result};
use crate::math::pairwise_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BleuConfig {
    pub max_order: usize,
    /// Numerator used in place of a zero clipped count.
    pub epsilon: f64,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 5,
            epsilon: 1e-9,
        }
    }
}

impl BleuConfig {
    fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return input("BLEU order must be at least 1");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return input("BLEU epsilon must be > 0");
        }
        Ok(())
    }
}

/// Largest and second-largest count of an n-gram over the references, so a
/// single reference can be left out in O(1).
#[derive(Debug, Clone, Copy, Default)]
struct Top2 {
    best: u32,
    owner: usize,
    second: u32,
}

impl Top2 {
    fn offer(&mut self, count: u32, owner: usize) {
        if count > self.best {
            self.second = self.best;
            self.best = count;
            self.owner = owner;
        } else if count > self.second {
            self.second = count;
        }
    }

    fn max_excluding(&self, excluded: Option<usize>) -> u32 {
        if excluded == Some(self.owner) {
            self.second
        } else {
            self.best
        }
    }
}

fn ngram_counts(ids: &[u32], n: usize) -> HashMap<&[u32], u32> {
    let mut out = HashMap::new();
    if ids.len() >= n {
        for g in ids.windows(n) {
            *out.entry(g).or_insert(0) += 1;
        }
    }
    out
}

struct RefIndex<'a> {
    /// Per order (index `n - 1`): n-gram -> top counts.
    clips: Vec<HashMap<&'a [u32], Top2>>,
    /// Reference length -> number of references with that length.
    lengths: BTreeMap<usize, usize>,
    refs: &'a [Sequence],
}

impl<'a> RefIndex<'a> {
    fn new(refs: &'a [Sequence], max_order: usize) -> Self {
        let mut clips: Vec<HashMap<&[u32], Top2>> = vec![HashMap::new(); max_order];
        let mut lengths = BTreeMap::new();
        for (i, r) in refs.iter().enumerate() {
            *lengths.entry(r.len()).or_insert(0) += 1;
            for n in 1..=max_order {
                for (g, c) in ngram_counts(r.ids(), n) {
                    clips[n - 1].entry(g).or_default().offer(c, i);
                }
            }
        }
        RefIndex { clips, lengths, refs }
    }

    /// Reference length closest to `len` (shorter wins ties).
    fn closest_length(&self, len: usize, excluded: Option<usize>) -> Option<usize> {
        let skip = excluded.map(|i| self.refs[i].len());
        let present = |l: usize, n: usize| n > usize::from(skip == Some(l));
        let below = self.lengths.range(..=len).rev().find(|&(&l, &n)| present(l, n));
        let above = self.lengths.range(len + 1..).find(|&(&l, &n)| present(l, n));
        match (below, above) {
            (Some((&b, _)), Some((&a, _))) => Some(if len - b <= a - len { b } else { a }),
            (Some((&b, _)), None) => Some(b),
            (None, Some((&a, _))) => Some(a),
            (None, None) => None,
        }
    }

    fn sentence_bleu(&self, hyp: &Sequence, excluded: Option<usize>, cfg: &BleuConfig) -> f64 {
        let ids = hyp.ids();
        // orders longer than the hypothesis have no n-grams and are left out
        let orders = cfg.max_order.min(ids.len());
        let mut log_sum = 0.0;
        for n in 1..=orders {
            let total = (ids.len() + 1 - n) as f64;
            let clipped: u32 = ngram_counts(ids, n)
                .into_iter()
                .map(|(g, c)| {
                    let limit = self.clips[n - 1].get(g).map_or(0, |t| t.max_excluding(excluded));
                    c.min(limit)
                })
                .sum();
            let numerator = if clipped == 0 { cfg.epsilon } else { clipped as f64 };
            log_sum += (numerator / total).ln();
        }
        let precision = (log_sum / orders as f64).exp();
        let r = self.closest_length(ids.len(), excluded).unwrap_or(ids.len()) as f64;
        let c = ids.len() as f64;
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        bp * precision
    }
}

/// Mean sentence BLEU of each hypothesis against the whole reference set.
///
/// Clipped counts use the maximum count over all references; the brevity
/// penalty uses the closest reference length.
pub fn bleu(hypotheses: &Corpus, references: &Corpus, cfg: &BleuConfig) -> Result<f64> {
    cfg.validate()?;
    let index = RefIndex::new(references.sequences(), cfg.max_order);
    let scores: Vec<f64> = hypotheses
        .sequences()
        .par_iter()
        .map(|h| index.sentence_bleu(h, None, cfg))
        .collect();
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

/// Mean BLEU of each sample against all the other samples.
pub fn self_bleu(samples: &Corpus, cfg: &BleuConfig) -> Result<f64> {
    cfg.validate()?;
    if samples.len() < 2 {
        return input("self-BLEU needs at least two samples");
    }
    let seqs = samples.sequences();
    let index = RefIndex::new(seqs, cfg.max_order);
    let scores: Vec<f64> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, s)| index.sentence_bleu(s, Some(i), cfg))
        .collect();
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Split, Vocab};
    use proptest::prelude::*;

    fn corpus(vocab: &Vocab, lines: &[&str]) -> Corpus {
        Corpus::from_lines(lines, vocab, 64, Split::Samples).unwrap()
    }

    fn vocab() -> Vocab {
        Vocab::from_tokens(["a", "b", "c", "d", "e", "f", "g", "h"]).unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn hand_counted_bigram_bleu() {
        let v = vocab();
        let cfg = BleuConfig {
            max_order: 2,
            ..Default::default()
        };
        let score = bleu(&corpus(&v, &["a b c d"]), &corpus(&v, &["a b c e"]), &cfg).unwrap();
        let expected = (0.75f64 * (2.0 / 3.0)).sqrt();
        assert!((score - expected).abs() < 1e-12);
        assert!((score - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn identity_and_zero_overlap() {
        let v = vocab();
        let cfg = BleuConfig::default();
        let xs = corpus(&v, &["a b c d e f", "b c", "h g f e d c b a"]);
        assert!((bleu(&xs, &xs, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let far = bleu(&corpus(&v, &["g h g h"]), &corpus(&v, &["a b c", "d e f"]), &cfg).unwrap();
        assert!(far <= 1e-6);
    }

    #[test]
    fn brevity_penalty_applies() {
        let v = vocab();
        let cfg = BleuConfig {
            max_order: 1,
            ..Default::default()
        };
        let s = bleu(&corpus(&v, &["a b"]), &corpus(&v, &["a b c d"]), &cfg).unwrap();
        assert!((s - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn self_bleu_extremes() {
        let v = vocab();
        let cfg = BleuConfig::default();
        let same = corpus(&v, &["a b c d", "a b c d", "a b c d"]);
        assert!((self_bleu(&same, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let disjoint = corpus(&v, &["a b", "c d", "e f", "g h"]);
        assert!(self_bleu(&disjoint, &cfg).unwrap() <= 1e-6);
        assert!(self_bleu(&corpus(&v, &["a b"]), &cfg).is_err());
    }

    #[test]
    fn self_bleu_excludes_only_the_sample_itself() {
        let v = vocab();
        let cfg = BleuConfig {
            max_order: 2,
            ..Default::default()
        };
        let xs = corpus(&v, &["a b c d", "a b c e", "a b c d"]);
        // brute force: score each sample against the others
        let mut total = 0.0;
        for i in 0..3 {
            let hyp = Corpus::new(vec![xs.sequences()[i].clone()], Split::Samples).unwrap();
            let others: Vec<Sequence> = (0..3)
                .filter(|&j| j != i)
                .map(|j| xs.sequences()[j].clone())
                .collect();
            total += bleu(&hyp, &Corpus::new(others, Split::Samples).unwrap(), &cfg).unwrap();
        }
        assert!((self_bleu(&xs, &cfg).unwrap() - total / 3.0).abs() < 1e-12);
    }

    fn arb_lines() -> impl Strategy<Value = Vec<Vec<u32>>> {
        proptest::collection::vec(proptest::collection::vec(4u32..10, 1..7), 2..10)
    }

    fn to_corpus(lines: &[Vec<u32>]) -> Corpus {
        Corpus::new(
            lines.iter().map(|l| Sequence::new(l.clone()).unwrap()).collect(),
            Split::Samples,
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn bleu_bounded_and_monotone_in_duplicates(hyps in arb_lines(), refs in arb_lines(), dup in 0usize..10) {
            let cfg = BleuConfig::default();
            let h = to_corpus(&hyps);
            let r = to_corpus(&refs);
            let base = bleu(&h, &r, &cfg).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
            let mut more = refs.clone();
            more.push(refs[dup % refs.len()].clone());
            let with_dup = bleu(&h, &to_corpus(&more), &cfg).unwrap();
            prop_assert!(with_dup >= base - 1e-12);
        }

        #[test]
        fn self_bleu_permutation_invariant(lines in arb_lines(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let cfg = BleuConfig::default();
            let mut shuffled = lines.clone();
            shuffled.shuffle(&mut crate::rng::seeded(seed));
            let a = self_bleu(&to_corpus(&lines), &cfg).unwrap();
            let b = self_bleu(&to_corpus(&shuffled), &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{context_window, LanguageModel, LengthMode};
use crate::checkpoint::Checkpoint;
use crate::data::{Corpus, Vocab, EOS};
use crate::error::{input, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NGramConfig {
    /// Model order; the context holds `order - 1` tokens.
    pub order: usize,
    /// Additive smoothing constant.
    pub delta: f64,
    /// Train on equal-length sequences without EOS.
    pub fixed_length: bool,
    pub max_len: usize,
}

impl Default for NGramConfig {
    fn default() -> Self {
        NGramConfig {
            order: 2,
            delta: 0.01,
            fixed_length: false,
            max_len: 64,
        }
    }
}

/// Additively smoothed n-gram model. Every supported token gets strictly
/// positive probability in every context.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM {
    order: usize,
    delta: f64,
    vocab: Vocab,
    mode: LengthMode,
    counts: BTreeMap<Vec<u32>, BTreeMap<u32, f64>>,
}

impl NGramLM {
    pub fn fit(vocab: Vocab, mode: LengthMode, cfg: &NGramConfig, train: &Corpus) -> Result<Self> {
        if cfg.order == 0 {
            return input("n-gram order must be at least 1");
        }
        if !(cfg.delta > 0.0 && cfg.delta.is_finite()) {
            return input("smoothing delta must be > 0");
        }
        let mut model = NGramLM {
            order: cfg.order,
            delta: cfg.delta,
            vocab,
            mode,
            counts: BTreeMap::new(),
        };
        let width = cfg.order - 1;
        for seq in train {
            let ids = seq.ids();
            let len = ids.len().min(mode.max_len());
            for t in 0..len {
                model.bump(context_window(&ids[..t], width), ids[t]);
            }
            if mode.scores_eos(len) {
                model.bump(context_window(&ids[..len], width), EOS);
            }
        }
        Ok(model)
    }

    fn bump(&mut self, ctx: Vec<u32>, token: u32) {
        *self.counts.entry(ctx).or_default().entry(token).or_insert(0.0) += 1.0;
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Configuration that refits this model's structure.
    pub fn config(&self) -> NGramConfig {
        NGramConfig {
            order: self.order,
            delta: self.delta,
            fixed_length: matches!(self.mode, LengthMode::Fixed { .. }),
            max_len: self.mode.max_len(),
        }
    }

    /// Stored (context, token) counts.
    pub fn parameter_count(&self) -> usize {
        self.counts.values().map(BTreeMap::len).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("ngram", self.vocab.clone());
        ck.config = serde_json::json!({
            "order": self.order,
            "delta": self.delta,
            "length_mode": self.mode,
        });
        let mut rows = Vec::with_capacity(self.parameter_count() * (self.order + 1));
        for (ctx, row) in &self.counts {
            for (&tok, &n) in row {
                rows.extend(ctx.iter().map(|&c| c as f64));
                rows.push(tok as f64);
                rows.push(n);
            }
        }
        ck.params.insert("counts".into(), rows);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct Cfg {
            order: usize,
            delta: f64,
            length_mode: LengthMode,
        }
        let cfg: Cfg = serde_json::from_value(ck.config.clone())?;
        if cfg.order == 0 || cfg.delta.is_nan() || cfg.delta <= 0.0 {
            return input("invalid n-gram checkpoint config");
        }
        let rows = ck.param("counts")?;
        let width = cfg.order + 1;
        if rows.len() % width != 0 {
            return input("n-gram count table has a ragged row");
        }
        let mut counts: BTreeMap<Vec<u32>, BTreeMap<u32, f64>> = BTreeMap::new();
        for row in rows.chunks(width) {
            let ctx: Vec<u32> = row[..cfg.order - 1].iter().map(|&x| x as u32).collect();
            counts
                .entry(ctx)
                .or_default()
                .insert(row[cfg.order - 1] as u32, row[cfg.order]);
        }
        Ok(NGramLM {
            order: cfg.order,
            delta: cfg.delta,
            vocab: ck.vocab.clone(),
            mode: cfg.length_mode,
            counts,
        })
    }
}

impl LanguageModel for NGramLM {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn length_mode(&self) -> LengthMode {
        self.mode
    }

    fn next_probs(&self, prefix: &[u32]) -> Vec<f64> {
        let support = self.mode.support(&self.vocab, prefix.len());
        let ctx = context_window(prefix, self.order - 1);
        let row = self.counts.get(&ctx);
        let count = |tok: u32| row.and_then(|r| r.get(&tok)).copied().unwrap_or(0.0);
        let total: f64 = support.iter().map(|&t| count(t)).sum();
        let denom = total + self.delta * support.len() as f64;
        let mut out = vec![0.0; self.vocab.len()];
        for &t in &support {
            out[t as usize] = (count(t) + self.delta) / denom;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MarkovSource, Sequence, Split};
    use crate::genmodel::{perplexity, sample, seq_logprob, GenConfig, GenModel, SamplerConfig};
    use crate::rng::seeded;

    fn abc_corpus(copies: usize) -> (Vocab, Corpus) {
        let vocab = Vocab::build(&["a b c"], 10).unwrap();
        let lines = vec!["a b c"; copies];
        let c = Corpus::from_lines(&lines, &vocab, 64, Split::Train).unwrap();
        (vocab, c)
    }

    #[test]
    fn closed_form_smoothed_bigram() {
        let (vocab, train) = abc_corpus(100);
        let cfg = NGramConfig::default();
        let m = NGramLM::fit(vocab.clone(), LengthMode::Variable { max_len: 64 }, &cfg, &train).unwrap();
        let p = m.next_probs(&[vocab.id_of("a")]);
        // support after the first position: EOS, UNK, a, b, c
        let expected = (100.0 + 0.01) / (100.0 + 5.0 * 0.01);
        assert!((p[vocab.id_of("b") as usize] - expected).abs() < 1e-12);
        assert!(p[vocab.id_of("b") as usize] >= 0.99);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p[crate::data::BOS as usize], 0.0);
        assert_eq!(p[crate::data::PAD as usize], 0.0);
    }

    #[test]
    fn conditionals_normalised_and_positive_everywhere() {
        let (vocab, train) = abc_corpus(3);
        for order in 1..=3 {
            let cfg = NGramConfig {
                order,
                ..Default::default()
            };
            let m = NGramLM::fit(vocab.clone(), LengthMode::Variable { max_len: 8 }, &cfg, &train).unwrap();
            for prefix in [vec![], vec![4], vec![4, 5], vec![6, 6, 6], vec![3]] {
                let p = m.next_probs(&prefix);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let support = m.length_mode().support(&vocab, prefix.len());
                assert!(support.iter().all(|&t| p[t as usize] > 0.0));
            }
        }
    }

    #[test]
    fn never_emits_eos_first_and_scores_it_last() {
        let (vocab, train) = abc_corpus(10);
        let cfg = NGramConfig::default();
        let m = NGramLM::fit(vocab.clone(), LengthMode::Variable { max_len: 64 }, &cfg, &train).unwrap();
        assert_eq!(m.next_probs(&[])[EOS as usize], 0.0);
        let s = train.sequences()[0].clone();
        let manual: f64 = [
            m.next_probs(&[])[4],
            m.next_probs(&[4])[5],
            m.next_probs(&[4, 5])[6],
            m.next_probs(&[4, 5, 6])[EOS as usize],
        ]
        .iter()
        .map(|p| p.ln())
        .sum();
        assert!((seq_logprob(&m, &s) - manual).abs() < 1e-12);
    }

    #[test]
    fn fixed_length_normalises_over_full_domain() {
        let src = MarkovSource::new(
            vec![0.5, 0.3, 0.2],
            vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.7, 0.2, 0.1]],
            4,
        )
        .unwrap();
        let vocab = src.vocab();
        let train = src.synth(500, &mut seeded(1), Split::Train).unwrap();
        for order in 1..=3 {
            let cfg = NGramConfig {
                order,
                fixed_length: true,
                ..Default::default()
            };
            let m = NGramLM::fit(vocab.clone(), LengthMode::Fixed { length: 4 }, &cfg, &train).unwrap();
            let mut total = 0.0;
            for code in 0..81u32 {
                let ids: Vec<u32> = (0..4).map(|t| 4 + (code / 3u32.pow(3 - t)) % 3).collect();
                total += seq_logprob(&m, &Sequence::new(ids).unwrap()).exp();
            }
            assert!((total - 1.0).abs() < 1e-6, "order {order}: {total}");
        }
    }

    #[test]
    fn learned_rows_converge_to_source() {
        let src = MarkovSource::new(
            vec![0.5, 0.3, 0.2],
            vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.7, 0.2, 0.1]],
            4,
        )
        .unwrap();
        let vocab = src.vocab();
        // 100k sequences of length 4
        let train = src.synth(100_000, &mut seeded(4), Split::Train).unwrap();
        let cfg = NGramConfig {
            order: 2,
            fixed_length: true,
            ..Default::default()
        };
        let m = NGramLM::fit(vocab, LengthMode::Fixed { length: 4 }, &cfg, &train).unwrap();
        for s in 0..3 {
            let p = m.next_probs(&[4 + s as u32]);
            let tv: f64 = (0..3)
                .map(|j| (p[4 + j] - src.transition()[s][j]).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv <= 0.02, "row {s}: tv {tv}");
        }
    }

    #[test]
    fn uniform_source_perplexity_near_entropy_rate() {
        let src = MarkovSource::uniform(4, 6).unwrap();
        let vocab = src.vocab();
        let mut rng = seeded(8);
        let train = src.synth(5_000, &mut rng, Split::Train).unwrap();
        let valid = src.synth(1_000, &mut rng, Split::Valid).unwrap();
        let cfg = GenConfig::Ngram(NGramConfig {
            order: 2,
            fixed_length: true,
            ..Default::default()
        });
        let (m, report) = crate::genmodel::train_mle(&vocab, &train, &valid, &cfg, 0).unwrap();
        let target = src.entropy_rate().exp();
        assert!((report.valid_perplexity - target).abs() / target < 0.05);
        assert!(report.valid_perplexity >= report.train_perplexity);
        assert!((perplexity(&m, &valid) - report.valid_perplexity).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_probabilities() {
        let (vocab, train) = abc_corpus(7);
        let cfg = NGramConfig {
            order: 3,
            ..Default::default()
        };
        let m = NGramLM::fit(vocab, LengthMode::Variable { max_len: 64 }, &cfg, &train).unwrap();
        let back = NGramLM::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back, m);
        let g = GenModel::NGram(m);
        let cfg = SamplerConfig::default();
        assert_eq!(
            sample(&g, &cfg, &mut seeded(1)),
            sample(&GenModel::NGram(back), &cfg, &mut seeded(1))
        );
    }

    #[test]
    fn rejects_bad_config() {
        let (vocab, train) = abc_corpus(1);
        let mode = LengthMode::Variable { max_len: 8 };
        assert!(NGramLM::fit(
            vocab.clone(),
            mode,
            &NGramConfig {
                order: 0,
                ..Default::default()
            },
            &train
        )
        .is_err());
        assert!(NGramLM::fit(
            vocab,
            mode,
            &NGramConfig {
                delta: 0.0,
                ..Default::default()
            },
            &train
        )
        .is_err());
    }
}

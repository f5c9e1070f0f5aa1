use crate::data::{Corpus, Split, Vocab};
use crate::error::{input, Result};
use crate::genmodel::{scored_events, seq_logprob, train_mle, GenConfig, LanguageModel};
use crate::math::pairwise_sum;

pub const DEFAULT_MIN_REVERSE_SAMPLES: usize = 1000;

/// Mean over sequences of the per-token negative log-likelihood under
/// `model` (EOS events count as tokens when the model scores them).
pub fn lm_score<M: LanguageModel + ?Sized>(model: &M, samples: &Corpus) -> f64 {
    let per_seq: Vec<f64> = samples
        .iter()
        .map(|s| -seq_logprob(model, s) / scored_events(model, s) as f64)
        .collect();
    order_free_mean(&per_seq)
}

fn order_free_mean(xs: &[f64]) -> f64 {
    // sort first so the value does not depend on corpus order
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    pairwise_sum(&v) / v.len() as f64
}

/// Train a fresh model on `samples` and score `real_test` with it.
///
/// N-gram models are fitted on all samples. Neural models hold out the last
/// tenth of the samples for early stopping.
pub fn reverse_lm_score(
    vocab: &Vocab,
    samples: &Corpus,
    real_test: &Corpus,
    config: &GenConfig,
    min_samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples.len() < min_samples {
        return input(format!(
            "reverse LM score needs at least {min_samples} samples, got {}",
            samples.len()
        ));
    }
    let (model, _) = match config {
        GenConfig::Ngram(_) => train_mle(vocab, samples, samples, config, seed)?,
        GenConfig::Neural(_) => {
            let (train, valid) = samples.split_fraction(0.1, Split::Train, Split::Valid)?;
            train_mle(vocab, &train, &valid, config, seed)?
        }
    };
    Ok(lm_score(&model, real_test))
}

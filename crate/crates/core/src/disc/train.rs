use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DiscConfig, Scorer, TextCnn};
use crate::data::{Corpus, Sequence, Split, Vocab};
use crate::error::{input, Result};
use crate::genmodel::SequenceSampler;
use crate::math;
use crate::rng::{seeded, SeedRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    pub real_count: usize,
    pub generated_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscTrainReport {
    pub epochs: Vec<EpochStats>,
    /// True when training stopped on patience rather than the epoch cap.
    pub converged: bool,
    /// Validation accuracy of the returned (best) parameters.
    pub final_valid_accuracy: f64,
    pub best_epoch: usize,
}

impl DiscTrainReport {
    /// Running best validation accuracy after each epoch.
    pub fn running_best(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.epochs
            .iter()
            .map(|e| {
                best = best.max(e.valid_accuracy);
                best
            })
            .collect()
    }
}

fn mean_loss(net: &TextCnn, real: &[Sequence], fake: &[Sequence]) -> f64 {
    let losses: Vec<f64> = real
        .iter()
        .map(|s| net.bce(s.ids(), 1.0))
        .chain(fake.iter().map(|s| net.bce(s.ids(), 0.0)))
        .collect();
    math::mean(&losses)
}

/// Fraction correct at threshold 0.5 over equal numbers of real and
/// generated sequences.
fn balanced_accuracy<S: Scorer + ?Sized>(disc: &S, real: &[Sequence], fake: &[Sequence]) -> f64 {
    let n = real.len().min(fake.len());
    let hits = real[..n].iter().filter(|s| disc.score(s) >= 0.5).count()
        + fake[..n].iter().filter(|s| disc.score(s) < 0.5).count();
    hits as f64 / (2 * n) as f64
}

/// Misclassification rate at threshold 0.5 over the balanced union of the
/// two corpora (the longer one is truncated).
pub fn error_rate<S: Scorer + ?Sized>(disc: &S, real_test: &Corpus, gen_samples: &Corpus) -> f64 {
    1.0 - balanced_accuracy(disc, real_test.sequences(), gen_samples.sequences())
}

/// Train against a generator, drawing a fresh generated set of the same
/// size as the real training set every epoch.
///
/// Validation uses `real_valid` when given, otherwise the last
/// `cfg.valid_fraction` of `real`; a matching generated validation set is
/// drawn once up front.
pub fn train_discriminator<G: SequenceSampler + ?Sized>(
    real: &Corpus,
    real_valid: Option<&Corpus>,
    generator: &G,
    cfg: &DiscConfig,
    embeddings: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<(TextCnn, DiscTrainReport)> {
    let vocab = generator.vocab();
    real.check_vocab(vocab)?;
    let (train, valid) = match real_valid {
        Some(v) => {
            v.check_vocab(vocab)?;
            (real.clone(), v.clone())
        }
        None => real.split_fraction(cfg.valid_fraction, Split::Train, Split::Valid)?,
    };
    let mut rng = seeded(seed);
    let fake_valid = generator.draw_corpus(valid.len(), &mut rng)?;
    fit(
        vocab,
        &train,
        &valid,
        &fake_valid,
        |n, rng| generator.draw_corpus(n, rng),
        cfg,
        embeddings,
        &mut rng,
    )
}

/// Train on fixed corpora: real and generated training sets must have the
/// same size, as must the two validation sets.
#[allow(clippy::too_many_arguments)]
pub fn train_on_corpora(
    vocab: &Vocab,
    real_train: &Corpus,
    real_valid: &Corpus,
    fake_train: &Corpus,
    fake_valid: &Corpus,
    cfg: &DiscConfig,
    embeddings: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<(TextCnn, DiscTrainReport)> {
    for c in [real_train, real_valid, fake_train, fake_valid] {
        c.check_vocab(vocab)?;
    }
    if real_train.len() != fake_train.len() || real_valid.len() != fake_valid.len() {
        return input("real and generated sets must be the same size");
    }
    let mut rng = seeded(seed);
    fit(
        vocab,
        real_train,
        real_valid,
        fake_valid,
        |_, _| Ok(fake_train.clone()),
        cfg,
        embeddings,
        &mut rng,
    )
}

#[allow(clippy::too_many_arguments)]
fn fit<F>(
    vocab: &Vocab,
    train: &Corpus,
    valid: &Corpus,
    fake_valid: &Corpus,
    mut fake_train: F,
    cfg: &DiscConfig,
    embeddings: Option<&[Vec<f64>]>,
    rng: &mut SeedRng,
) -> Result<(TextCnn, DiscTrainReport)>
where
    F: FnMut(usize, &mut SeedRng) -> Result<Corpus>,
{
    cfg.validate()?;
    let mut net = TextCnn::new(vocab.clone(), cfg, embeddings, rng)?;
    let mut velocity = vec![0.0; net.parameter_count()];
    let mut grad = vec![0.0; net.parameter_count()];
    // ranked by validation accuracy, ties broken by validation loss
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, net.params().to_vec(), 0usize);
    let mut epochs = Vec::new();
    let mut stale = 0;
    let mut converged = false;
    for epoch in 0..cfg.max_epochs {
        let fake = fake_train(train.len(), rng)?;
        let mut examples: Vec<(&[u32], f64)> = train
            .iter()
            .map(|s| (s.ids(), 1.0))
            .chain(fake.iter().map(|s| (s.ids(), 0.0)))
            .collect();
        examples.shuffle(rng);
        let mut losses = Vec::with_capacity(examples.len());
        for batch in examples.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &(ids, y) in batch {
                losses.push(net.accumulate_grad(ids, y, scale, &mut grad));
            }
            for ((p, v), g) in net.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
        let acc = balanced_accuracy(&net, valid.sequences(), fake_valid.sequences());
        let vloss = mean_loss(&net, valid.sequences(), fake_valid.sequences());
        epochs.push(EpochStats {
            train_loss: math::mean(&losses),
            valid_loss: vloss,
            valid_accuracy: acc,
            real_count: train.len(),
            generated_count: fake.len(),
        });
        if acc > best.0 || (acc == best.0 && vloss < best.1) {
            best = (acc, vloss, net.params().to_vec(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                converged = true;
                break;
            }
        }
    }
    *net.params_mut() = best.2;
    Ok((
        net,
        DiscTrainReport {
            epochs,
            converged,
            final_valid_accuracy: best.0,
            best_epoch: best.3,
        },
    ))
}

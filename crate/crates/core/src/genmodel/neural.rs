use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{context_window, LanguageModel, LengthMode};
use crate::checkpoint::Checkpoint;
use crate::data::{Corpus, Vocab, EOS};
use crate::error::{input, Result};
use crate::math;
use crate::rng::{seeded, SeedRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralConfig {
    /// Number of previous tokens fed to the network.
    pub context: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub fixed_length: bool,
    pub max_len: usize,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            context: 2,
            embed_dim: 32,
            hidden_dim: 64,
            learning_rate: 0.1,
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            fixed_length: false,
            max_len: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NeuralTrainReport {
    pub train_nll: Vec<f64>,
    pub valid_nll: Vec<f64>,
    pub best_epoch: usize,
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    vocab: usize,
    context: usize,
    embed: usize,
    hidden: usize,
}

impl Layout {
    fn emb(&self) -> Range<usize> {
        0..self.vocab * self.embed
    }
    fn w1(&self) -> Range<usize> {
        let s = self.emb().end;
        s..s + self.hidden * self.context * self.embed
    }
    fn b1(&self) -> Range<usize> {
        let s = self.w1().end;
        s..s + self.hidden
    }
    fn w2(&self) -> Range<usize> {
        let s = self.b1().end;
        s..s + self.vocab * self.hidden
    }
    fn b2(&self) -> Range<usize> {
        let s = self.w2().end;
        s..s + self.vocab
    }
    fn total(&self) -> usize {
        self.b2().end
    }
    fn input_dim(&self) -> usize {
        self.context * self.embed
    }
}

/// One next-token prediction: context ids, target id, and position (which
/// fixes the support).
#[derive(Debug, Clone)]
pub(crate) struct Event {
    ctx: Vec<u32>,
    target: u32,
    pos: usize,
}

/// Feedforward window language model: concatenated context embeddings, one
/// tanh hidden layer, softmax over the supported ids.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralLM {
    vocab: Vocab,
    mode: LengthMode,
    layout: Layout,
    params: Vec<f64>,
}

struct Forward {
    input: Vec<f64>,
    hidden: Vec<f64>,
    support: Vec<u32>,
    probs: Vec<f64>,
}

impl NeuralLM {
    fn init(vocab: Vocab, mode: LengthMode, cfg: &NeuralConfig, rng: &mut SeedRng) -> Result<Self> {
        if cfg.embed_dim == 0 || cfg.hidden_dim == 0 {
            return input("neural LM dimensions must be positive");
        }
        let layout = Layout {
            vocab: vocab.len(),
            context: cfg.context.max(1),
            embed: cfg.embed_dim,
            hidden: cfg.hidden_dim,
        };
        let mut params = vec![0.0; layout.total()];
        let mut fill = |r: Range<usize>, scale: f64| {
            for p in &mut params[r] {
                *p = rng.gen_range(-scale..scale);
            }
        };
        fill(layout.emb(), 0.5);
        fill(layout.w1(), 1.0 / (layout.input_dim() as f64).sqrt());
        fill(layout.w2(), 1.0 / (layout.hidden as f64).sqrt());
        Ok(NeuralLM {
            vocab,
            mode,
            layout,
            params,
        })
    }

    /// Untrained model with random weights.
    pub fn new(vocab: Vocab, mode: LengthMode, cfg: &NeuralConfig, rng: &mut SeedRng) -> Result<Self> {
        Self::init(vocab, mode, cfg, rng)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Mean per-token NLL of `corpus`.
    pub fn corpus_nll(&self, corpus: &Corpus) -> f64 {
        self.mean_nll(&self.events(corpus))
    }

    /// [`Self::corpus_nll`] with its gradient.
    pub fn corpus_nll_grad(&self, corpus: &Corpus) -> (f64, Vec<f64>) {
        self.loss_and_grad(&self.events(corpus))
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Rows of the embedding table, one per vocabulary id.
    pub fn embedding_rows(&self) -> Vec<Vec<f64>> {
        self.params[self.layout.emb()]
            .chunks(self.layout.embed)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub(crate) fn events(&self, corpus: &Corpus) -> Vec<Event> {
        let mut out = Vec::new();
        for seq in corpus {
            let ids = seq.ids();
            let len = ids.len().min(self.mode.max_len());
            for t in 0..len {
                out.push(Event {
                    ctx: context_window(&ids[..t], self.layout.context),
                    target: ids[t],
                    pos: t,
                });
            }
            if self.mode.scores_eos(len) {
                out.push(Event {
                    ctx: context_window(&ids[..len], self.layout.context),
                    target: EOS,
                    pos: len,
                });
            }
        }
        out
    }

    fn forward(&self, ctx: &[u32], pos: usize) -> Forward {
        let l = &self.layout;
        let emb = &self.params[l.emb()];
        let mut input = Vec::with_capacity(l.input_dim());
        for &id in ctx {
            let r = id as usize * l.embed;
            input.extend_from_slice(&emb[r..r + l.embed]);
        }
        let w1 = &self.params[l.w1()];
        let b1 = &self.params[l.b1()];
        let hidden: Vec<f64> = (0..l.hidden)
            .map(|h| {
                let row = &w1[h * l.input_dim()..(h + 1) * l.input_dim()];
                (b1[h] + row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>()).tanh()
            })
            .collect();
        let support = self.mode.support(&self.vocab, pos);
        let w2 = &self.params[l.w2()];
        let b2 = &self.params[l.b2()];
        let logits: Vec<f64> = support
            .iter()
            .map(|&t| {
                let r = t as usize;
                let row = &w2[r * l.hidden..(r + 1) * l.hidden];
                b2[r] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        let probs = math::softmax(&logits);
        Forward {
            input,
            hidden,
            support,
            probs,
        }
    }

    /// Mean NLL over `events` and its gradient with respect to every
    /// parameter. Embedding gradients accumulate per context slot.
    pub(crate) fn loss_and_grad(&self, events: &[Event]) -> (f64, Vec<f64>) {
        let l = &self.layout;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let scale = 1.0 / events.len() as f64;
        let (emb_r, w1_r, b1_r, w2_r, b2_r) = (l.emb(), l.w1(), l.b1(), l.w2(), l.b2());
        for ev in events {
            let f = self.forward(&ev.ctx, ev.pos);
            let k = f
                .support
                .iter()
                .position(|&t| t == ev.target)
                .expect("target inside support");
            loss -= f.probs[k].ln();
            let mut dh = vec![0.0; l.hidden];
            for (j, &t) in f.support.iter().enumerate() {
                let dz = (f.probs[j] - if j == k { 1.0 } else { 0.0 }) * scale;
                let r = t as usize;
                grad[b2_r.start + r] += dz;
                let row = w2_r.start + r * l.hidden;
                for h in 0..l.hidden {
                    grad[row + h] += dz * f.hidden[h];
                    dh[h] += dz * self.params[row + h];
                }
            }
            let mut dx = vec![0.0; l.input_dim()];
            for h in 0..l.hidden {
                let da = dh[h] * (1.0 - f.hidden[h] * f.hidden[h]);
                grad[b1_r.start + h] += da;
                let row = w1_r.start + h * l.input_dim();
                for i in 0..l.input_dim() {
                    grad[row + i] += da * f.input[i];
                    dx[i] += da * self.params[row + i];
                }
            }
            for (slot, &id) in ev.ctx.iter().enumerate() {
                let dst = emb_r.start + id as usize * l.embed;
                for e in 0..l.embed {
                    grad[dst + e] += dx[slot * l.embed + e];
                }
            }
        }
        (loss * scale, grad)
    }

    pub(crate) fn mean_nll(&self, events: &[Event]) -> f64 {
        let nll: Vec<f64> = events
            .iter()
            .map(|ev| {
                let f = self.forward(&ev.ctx, ev.pos);
                let k = f
                    .support
                    .iter()
                    .position(|&t| t == ev.target)
                    .expect("in support");
                -f.probs[k].ln()
            })
            .collect();
        math::mean(&nll)
    }

    /// Minibatch gradient descent with early stopping on validation NLL; the
    /// best-scoring parameters are kept.
    pub fn train(
        vocab: Vocab,
        mode: LengthMode,
        cfg: &NeuralConfig,
        train: &Corpus,
        valid: &Corpus,
        seed: u64,
    ) -> Result<(Self, NeuralTrainReport)> {
        if cfg.batch_size == 0 || cfg.max_epochs == 0 {
            return input("batch_size and max_epochs must be positive");
        }
        if cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
            return input("learning_rate must be > 0");
        }
        let mut rng = seeded(seed);
        let mut model = NeuralLM::init(vocab, mode, cfg, &mut rng)?;
        let mut train_events = model.events(train);
        let valid_events = model.events(valid);
        let mut report = NeuralTrainReport::default();
        let mut best = (f64::INFINITY, model.params.clone());
        let mut stale = 0;
        for epoch in 0..cfg.max_epochs {
            train_events.shuffle(&mut rng);
            for batch in train_events.chunks(cfg.batch_size) {
                let (_, grad) = model.loss_and_grad(batch);
                for (p, g) in model.params.iter_mut().zip(&grad) {
                    *p -= cfg.learning_rate * g;
                }
            }
            report.train_nll.push(model.mean_nll(&train_events));
            let v = model.mean_nll(&valid_events);
            report.valid_nll.push(v);
            if v < best.0 {
                best = (v, model.params.clone());
                report.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        model.params = best.1;
        Ok((model, report))
    }

    /// Configuration with this network's shape; optimizer settings are
    /// defaults.
    pub fn config(&self) -> NeuralConfig {
        NeuralConfig {
            context: self.layout.context,
            embed_dim: self.layout.embed,
            hidden_dim: self.layout.hidden,
            fixed_length: matches!(self.mode, LengthMode::Fixed { .. }),
            max_len: self.mode.max_len(),
            ..Default::default()
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let l = &self.layout;
        let mut ck = Checkpoint::new("neural", self.vocab.clone());
        ck.config = serde_json::json!({
            "context": l.context,
            "embed_dim": l.embed,
            "hidden_dim": l.hidden,
            "length_mode": self.mode,
        });
        for (name, r) in [
            ("embedding", l.emb()),
            ("w1", l.w1()),
            ("b1", l.b1()),
            ("w2", l.w2()),
            ("b2", l.b2()),
        ] {
            ck.params.insert(name.into(), self.params[r].to_vec());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct Cfg {
            context: usize,
            embed_dim: usize,
            hidden_dim: usize,
            length_mode: LengthMode,
        }
        let cfg: Cfg = serde_json::from_value(ck.config.clone())?;
        let layout = Layout {
            vocab: ck.vocab.len(),
            context: cfg.context,
            embed: cfg.embed_dim,
            hidden: cfg.hidden_dim,
        };
        let mut params = Vec::with_capacity(layout.total());
        for (name, r) in [
            ("embedding", layout.emb()),
            ("w1", layout.w1()),
            ("b1", layout.b1()),
            ("w2", layout.w2()),
            ("b2", layout.b2()),
        ] {
            let p = ck.param(name)?;
            if p.len() != r.len() {
                return input(format!(
                    "parameter {name} has {} values, expected {}",
                    p.len(),
                    r.len()
                ));
            }
            params.extend_from_slice(p);
        }
        Ok(NeuralLM {
            vocab: ck.vocab.clone(),
            mode: cfg.length_mode,
            layout,
            params,
        })
    }
}

impl LanguageModel for NeuralLM {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn length_mode(&self) -> LengthMode {
        self.mode
    }

    fn next_probs(&self, prefix: &[u32]) -> Vec<f64> {
        let ctx = context_window(prefix, self.layout.context);
        let f = self.forward(&ctx, prefix.len());
        let mut out = vec![0.0; self.vocab.len()];
        for (&t, &p) in f.support.iter().zip(&f.probs) {
            out[t as usize] = p;
        }
        out
    }
}

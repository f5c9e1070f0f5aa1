use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{Sequence, Vocab, BOS, PAD};
use crate::error::{input, Result};
use crate::math::{sigmoid, softplus};
use crate::rng::SeedRng;

/// Logits are clamped to this magnitude at prediction time so the output
/// stays strictly inside (0, 1).
const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscConfig {
    pub embed_dim: usize,
    /// Convolution window widths.
    pub windows: Vec<usize>,
    /// Kernels per window width.
    pub kernels: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-accuracy improvement before stopping.
    pub patience: usize,
    /// Fraction of real data held out for validation when none is given.
    pub valid_fraction: f64,
}

impl Default for DiscConfig {
    fn default() -> Self {
        DiscConfig {
            embed_dim: 16,
            windows: vec![2, 3],
            kernels: vec![16, 32],
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            max_epochs: 200,
            patience: 5,
            valid_fraction: 0.1,
        }
    }
}

impl DiscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return input("embed_dim must be positive");
        }
        if self.windows.is_empty() || self.windows.len() != self.kernels.len() {
            return input("windows and kernels must be non-empty and of equal length");
        }
        if self.windows.contains(&0) || self.kernels.contains(&0) {
            return input("window widths and kernel counts must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return input("learning_rate must be > 0 and momentum in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return input("batch_size and max_epochs must be positive");
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction < 1.0) {
            return input("valid_fraction must be in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    vocab: usize,
    embed: usize,
    windows: Vec<usize>,
    kernels: Vec<usize>,
}

impl Layout {
    fn emb(&self) -> Range<usize> {
        0..self.vocab * self.embed
    }
    /// Weight block of bank `b`: `kernels[b]` rows of `windows[b] * embed`.
    fn conv_w(&self, b: usize) -> Range<usize> {
        let mut s = self.emb().end;
        for i in 0..b {
            s += self.kernels[i] * (self.windows[i] * self.embed + 1);
        }
        s..s + self.kernels[b] * self.windows[b] * self.embed
    }
    fn conv_b(&self, b: usize) -> Range<usize> {
        let s = self.conv_w(b).end;
        s..s + self.kernels[b]
    }
    fn features(&self) -> usize {
        self.kernels.iter().sum()
    }
    fn out_w(&self) -> Range<usize> {
        let s = self.conv_b(self.windows.len() - 1).end;
        s..s + self.features()
    }
    fn out_b(&self) -> usize {
        self.out_w().end
    }
    fn total(&self) -> usize {
        self.out_b() + 1
    }
}

/// Convolutional text classifier: embeddings, ReLU convolution banks with
/// global max-pooling over window positions, and a sigmoid output. Inputs
/// are framed with a leading BOS token; PAD tokens embed to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCnn {
    vocab: Vocab,
    layout: Layout,
    params: Vec<f64>,
    frozen_embeddings: bool,
}

/// Cached activations of one forward pass.
pub(crate) struct Trace {
    /// Per feature: pooled pre-activation and winning window position.
    pooled: Vec<(f64, usize)>,
    features: Vec<f64>,
    pub(crate) logit: f64,
}

impl TextCnn {
    /// Random initialisation. When `embeddings` is given it is copied in and
    /// frozen; its row width sets the embedding dimension.
    pub fn new(
        vocab: Vocab,
        cfg: &DiscConfig,
        embeddings: Option<&[Vec<f64>]>,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        cfg.validate()?;
        let embed = match embeddings {
            Some(rows) => {
                if rows.len() != vocab.len() || rows.iter().any(|r| r.len() != rows[0].len()) {
                    return input("embedding table does not match the vocabulary");
                }
                rows[0].len()
            }
            None => cfg.embed_dim,
        };
        let layout = Layout {
            vocab: vocab.len(),
            embed,
            windows: cfg.windows.clone(),
            kernels: cfg.kernels.clone(),
        };
        let mut params = vec![0.0; layout.total()];
        match embeddings {
            Some(rows) => params[layout.emb()].copy_from_slice(&rows.concat()),
            None => {
                for p in &mut params[layout.emb()] {
                    *p = rng.gen_range(-0.5..0.5);
                }
            }
        }
        for b in 0..layout.windows.len() {
            let scale = 1.0 / ((layout.windows[b] * embed) as f64).sqrt();
            for p in &mut params[layout.conv_w(b)] {
                *p = rng.gen_range(-scale..scale);
            }
            for p in &mut params[layout.conv_b(b)] {
                *p = 0.1;
            }
        }
        let scale = 1.0 / (layout.features() as f64).sqrt();
        for p in &mut params[layout.out_w()] {
            *p = rng.gen_range(-scale..scale);
        }
        Ok(TextCnn {
            vocab,
            layout,
            params,
            frozen_embeddings: embeddings.is_some(),
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn frozen_embeddings(&self) -> bool {
        self.frozen_embeddings
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Vec<f64> {
        &mut self.params
    }

    /// Overwrite one parameter (gradient checks).
    pub fn set_param(&mut self, i: usize, value: f64) {
        self.params[i] = value;
    }

    /// Mean binary cross-entropy over labelled examples (1 = real).
    pub fn batch_loss(&self, batch: &[(Sequence, f64)]) -> f64 {
        let losses: Vec<f64> = batch.iter().map(|(s, y)| self.bce(s.ids(), *y)).collect();
        crate::math::mean(&losses)
    }

    /// [`Self::batch_loss`] with its gradient.
    pub fn batch_loss_grad(&self, batch: &[(Sequence, f64)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let scale = 1.0 / batch.len() as f64;
        let loss: f64 = batch
            .iter()
            .map(|(s, y)| self.accumulate_grad(s.ids(), *y, scale, &mut grad))
            .sum();
        (loss * scale, grad)
    }

    #[cfg(test)]
    pub(crate) fn embedding_range(&self) -> Range<usize> {
        self.layout.emb()
    }

    /// Length without trailing PAD tokens.
    fn effective_len(ids: &[u32]) -> usize {
        ids.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1)
    }

    /// Embedding of the token at `pos`, or `None` for padding.
    fn token_at(&self, ids: &[u32], len: usize, pos: usize) -> Option<&[f64]> {
        if pos >= len || ids[pos] == PAD {
            return None;
        }
        let r = ids[pos] as usize * self.layout.embed;
        Some(&self.params[r..r + self.layout.embed])
    }

    /// Sequence with its BOS marker, which lets windows see the start.
    fn framed(ids: &[u32]) -> Vec<u32> {
        let mut out = Vec::with_capacity(ids.len() + 1);
        out.push(BOS);
        out.extend_from_slice(ids);
        out
    }

    pub(crate) fn forward(&self, ids: &[u32]) -> Trace {
        self.forward_framed(&Self::framed(ids))
    }

    fn forward_framed(&self, ids: &[u32]) -> Trace {
        let l = &self.layout;
        let len = Self::effective_len(ids);
        let mut pooled = Vec::with_capacity(l.features());
        for (b, (&w, &k)) in l.windows.iter().zip(&l.kernels).enumerate() {
            let weights = &self.params[l.conv_w(b)];
            let bias = &self.params[l.conv_b(b)];
            let positions = len.saturating_sub(w - 1).max(1);
            let row_len = w * l.embed;
            for kernel in 0..k {
                let row = &weights[kernel * row_len..(kernel + 1) * row_len];
                let mut best = (f64::NEG_INFINITY, 0);
                for p in 0..positions {
                    let mut z = bias[kernel];
                    for j in 0..w {
                        if let Some(e) = self.token_at(ids, len, p + j) {
                            let wj = &row[j * l.embed..(j + 1) * l.embed];
                            z += wj.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    if z > best.0 {
                        best = (z, p);
                    }
                }
                pooled.push(best);
            }
        }
        let features: Vec<f64> = pooled.iter().map(|&(z, _)| z.max(0.0)).collect();
        let ow = &self.params[l.out_w()];
        let logit = self.params[l.out_b()] + ow.iter().zip(&features).map(|(a, b)| a * b).sum::<f64>();
        Trace {
            pooled,
            features,
            logit,
        }
    }

    /// Probability that `seq` is real; strictly inside (0, 1).
    pub fn predict(&self, seq: &Sequence) -> f64 {
        self.predict_ids(seq.ids())
    }

    fn predict_ids(&self, ids: &[u32]) -> f64 {
        sigmoid(self.forward(ids).logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
    }

    /// Scores a batch by padding every sequence to the longest one.
    pub fn predict_batch(&self, seqs: &[Sequence]) -> Vec<f64> {
        let width = seqs.iter().map(Sequence::len).max().unwrap_or(0);
        seqs.iter()
            .map(|s| {
                let mut ids = s.ids().to_vec();
                ids.resize(width, PAD);
                self.predict_ids(&ids)
            })
            .collect()
    }

    /// Binary cross-entropy of one example (label 1 = real).
    pub(crate) fn bce(&self, ids: &[u32], label: f64) -> f64 {
        let z = self.forward(ids).logit;
        softplus(z) - label * z
    }

    /// Adds `scale * dLoss/dparams` for one example into `grad`; returns the
    /// example loss. Embedding gradients are skipped when frozen.
    pub(crate) fn accumulate_grad(&self, ids: &[u32], label: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let ids = &Self::framed(ids)[..];
        let t = self.forward_framed(ids);
        let loss = softplus(t.logit) - label * t.logit;
        let dz = (sigmoid(t.logit) - label) * scale;
        let ow = l.out_w();
        grad[l.out_b()] += dz;
        let len = Self::effective_len(ids);
        let mut f = 0;
        for (b, (&w, &k)) in l.windows.iter().zip(&l.kernels).enumerate() {
            let cw = l.conv_w(b);
            let cb = l.conv_b(b);
            let row_len = w * l.embed;
            for kernel in 0..k {
                grad[ow.start + f] += dz * t.features[f];
                let (pre, pos) = t.pooled[f];
                if pre > 0.0 {
                    let dm = dz * self.params[ow.start + f];
                    grad[cb.start + kernel] += dm;
                    let row = cw.start + kernel * row_len;
                    for j in 0..w {
                        let p = pos + j;
                        if let Some(e) = self.token_at(ids, len, p) {
                            for d in 0..l.embed {
                                grad[row + j * l.embed + d] += dm * e[d];
                            }
                            if !self.frozen_embeddings {
                                let er = ids[p] as usize * l.embed;
                                for d in 0..l.embed {
                                    grad[er + d] += dm * self.params[row + j * l.embed + d];
                                }
                            }
                        }
                    }
                }
                f += 1;
            }
        }
        loss
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let l = &self.layout;
        let mut ck = Checkpoint::new("textcnn", self.vocab.clone());
        ck.config = serde_json::json!({
            "embed_dim": l.embed,
            "windows": l.windows,
            "kernels": l.kernels,
            "frozen_embeddings": self.frozen_embeddings,
        });
        ck.params
            .insert("embedding".into(), self.params[l.emb()].to_vec());
        for b in 0..l.windows.len() {
            let w = l.windows[b];
            ck.params
                .insert(format!("conv{w}.weight"), self.params[l.conv_w(b)].to_vec());
            ck.params
                .insert(format!("conv{w}.bias"), self.params[l.conv_b(b)].to_vec());
        }
        ck.params
            .insert("out.weight".into(), self.params[l.out_w()].to_vec());
        ck.params.insert("out.bias".into(), vec![self.params[l.out_b()]]);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "textcnn" {
            return input(format!("checkpoint kind {:?} is not a discriminator", ck.kind));
        }
        #[derive(Deserialize)]
        struct Cfg {
            embed_dim: usize,
            windows: Vec<usize>,
            kernels: Vec<usize>,
            frozen_embeddings: bool,
        }
        let cfg: Cfg = serde_json::from_value(ck.config.clone())?;
        if cfg.windows.is_empty() || cfg.windows.len() != cfg.kernels.len() {
            return input("discriminator checkpoint has mismatched windows/kernels");
        }
        let layout = Layout {
            vocab: ck.vocab.len(),
            embed: cfg.embed_dim,
            windows: cfg.windows,
            kernels: cfg.kernels,
        };
        let mut params = vec![0.0; layout.total()];
        let mut put = |name: String, r: Range<usize>| -> Result<()> {
            let p = ck.param(&name)?;
            if p.len() != r.len() {
                return input(format!(
                    "parameter {name} has {} values, expected {}",
                    p.len(),
                    r.len()
                ));
            }
            params[r].copy_from_slice(p);
            Ok(())
        };
        put("embedding".into(), layout.emb())?;
        for b in 0..layout.windows.len() {
            let w = layout.windows[b];
            put(format!("conv{w}.weight"), layout.conv_w(b))?;
            put(format!("conv{w}.bias"), layout.conv_b(b))?;
        }
        put("out.weight".into(), layout.out_w())?;
        let ob = layout.out_b();
        put("out.bias".into(), ob..ob + 1)?;
        Ok(TextCnn {
            vocab: ck.vocab.clone(),
            layout,
            params,
            frozen_embeddings: cfg.frozen_embeddings,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        TextCnn::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny(frozen: bool) -> TextCnn {
        let vocab = Vocab::from_tokens(["a", "b", "c"]).unwrap();
        let cfg = DiscConfig {
            embed_dim: 3,
            kernels: vec![2, 3],
            ..Default::default()
        };
        let emb: Vec<Vec<f64>> = (0..vocab.len())
            .map(|i| vec![0.3 * i as f64 - 0.7, 0.2, -0.1 * i as f64])
            .collect();
        TextCnn::new(vocab, &cfg, frozen.then_some(emb.as_slice()), &mut seeded(17)).unwrap()
    }

    fn seq(ids: &[u32]) -> Sequence {
        Sequence::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn full_gradient_check() {
        let mut net = tiny(false);
        let batch = [
            (vec![4u32, 5, 6, 4], 1.0),
            (vec![6u32, 6], 0.0),
            (vec![5u32], 1.0),
        ];
        let mut grad = vec![0.0; net.parameter_count()];
        for (ids, y) in &batch {
            net.accumulate_grad(ids, *y, 1.0 / 3.0, &mut grad);
        }
        let loss = |n: &TextCnn| batch.iter().map(|(ids, y)| n.bce(ids, *y)).sum::<f64>() / 3.0;
        let eps = 1e-4;
        let mut worst: f64 = 0.0;
        assert_eq!(grad.len(), net.parameter_count());
        for (i, &g) in grad.iter().enumerate() {
            let orig = net.params[i];
            net.params[i] = orig + eps;
            let up = loss(&net);
            net.params[i] = orig - eps;
            let down = loss(&net);
            net.params[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let denom = numeric.abs().max(g.abs()).max(1e-6);
            worst = worst.max((numeric - g).abs() / denom);
        }
        assert!(worst <= 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn frozen_embeddings_get_no_gradient() {
        let net = tiny(true);
        assert!(net.frozen_embeddings());
        let mut grad = vec![0.0; net.parameter_count()];
        net.accumulate_grad(&[4, 5, 6], 1.0, 1.0, &mut grad);
        assert!(grad[net.embedding_range()].iter().all(|&g| g == 0.0));
        assert!(grad.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn predictions_strictly_inside_unit_interval() {
        let mut net = tiny(false);
        let ob = net.layout.out_b();
        for bias in [-1e6, 0.0, 1e6] {
            net.params[ob] = bias;
            let p = net.predict(&seq(&[4, 5]));
            assert!(p > 0.0 && p < 1.0, "{p}");
        }
    }

    #[test]
    fn padding_never_changes_prediction() {
        let net = tiny(false);
        for ids in [vec![4u32], vec![4, 5], vec![6, 5, 4, 4, 6]] {
            let base = net.predict(&seq(&ids));
            for extra in 1..4 {
                let mut padded = ids.clone();
                padded.extend(std::iter::repeat_n(PAD, extra));
                assert_eq!(net.predict(&seq(&padded)), base);
            }
        }
        let batch = vec![seq(&[4]), seq(&[5, 6, 4, 4]), seq(&[6, 6])];
        let together = net.predict_batch(&batch);
        for (s, p) in batch.iter().zip(together) {
            assert!((net.predict(s) - p).abs() <= 1e-6);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let net = tiny(true);
        let back = TextCnn::from_checkpoint(&net.to_checkpoint()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn config_validation() {
        assert!(DiscConfig::default().validate().is_ok());
        let bad = DiscConfig {
            windows: vec![2],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DiscConfig {
            momentum: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

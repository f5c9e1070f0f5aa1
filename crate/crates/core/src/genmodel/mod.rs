//! Autoregressive generators: exact sequence log-probability and tempered
//! ancestral sampling.

mod neural;
mod ngram;

use serde::{Deserialize, Serialize};

pub use neural::{NeuralConfig, NeuralLM, NeuralTrainReport};
pub use ngram::{NGramConfig, NGramLM};

use crate::checkpoint::Checkpoint;
use crate::data::{Corpus, MarkovSource, Sequence, Vocab, BOS, EOS, NUM_RESERVED, UNK};
use crate::error::{input, Result};
use crate::math;
use crate::rng::{sample_categorical, SeedRng};

/// How a model ends its sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LengthMode {
    /// Exactly `length` tokens, no EOS. Used for enumerable synthetic domains.
    Fixed { length: usize },
    /// Stop at EOS or after `max_len` tokens, whichever comes first.
    Variable { max_len: usize },
}

impl LengthMode {
    /// Ids a model may emit at position `pos`.
    pub fn support(&self, vocab: &Vocab, pos: usize) -> Vec<u32> {
        match self {
            LengthMode::Fixed { .. } => vocab.corpus_ids().collect(),
            LengthMode::Variable { .. } => {
                let mut ids = Vec::with_capacity(vocab.len());
                // an empty sequence is not a sequence
                if pos > 0 {
                    ids.push(EOS);
                }
                ids.push(UNK);
                ids.extend(vocab.corpus_ids());
                ids
            }
        }
    }

    pub fn max_len(&self) -> usize {
        match *self {
            LengthMode::Fixed { length } => length,
            LengthMode::Variable { max_len } => max_len,
        }
    }

    /// Whether a sequence of `len` tokens is scored with a closing EOS event.
    pub fn scores_eos(&self, len: usize) -> bool {
        matches!(*self, LengthMode::Variable { max_len } if len < max_len)
    }
}

/// An autoregressive distribution over token sequences.
pub trait LanguageModel {
    fn vocab(&self) -> &Vocab;

    fn length_mode(&self) -> LengthMode;

    /// Conditional distribution of the next token over the whole vocabulary
    /// (zero outside the model's support).
    fn next_probs(&self, prefix: &[u32]) -> Vec<f64>;
}

/// `sum_t log p(x_t | x_<t)`, plus the EOS event for variable-length models.
pub fn seq_logprob<M: LanguageModel + ?Sized>(model: &M, seq: &Sequence) -> f64 {
    let mode = model.length_mode();
    if let LengthMode::Fixed { length } = mode {
        if seq.len() != length {
            return f64::NEG_INFINITY;
        }
    }
    if seq.len() > mode.max_len() {
        return f64::NEG_INFINITY;
    }
    let ids = seq.ids();
    let mut lp = 0.0;
    for t in 0..ids.len() {
        let probs = model.next_probs(&ids[..t]);
        lp += probs.get(ids[t] as usize).copied().unwrap_or(0.0).ln();
    }
    if mode.scores_eos(ids.len()) {
        lp += model.next_probs(ids)[EOS as usize].ln();
    }
    lp
}

/// Number of scored events in `seq`: its tokens plus a closing EOS when the
/// model scores one.
pub fn scored_events<M: LanguageModel + ?Sized>(model: &M, seq: &Sequence) -> usize {
    seq.len() + usize::from(model.length_mode().scores_eos(seq.len()))
}

/// `exp` of the mean per-event negative log-likelihood.
pub fn perplexity<M: LanguageModel + ?Sized>(model: &M, corpus: &Corpus) -> f64 {
    let nll: Vec<f64> = corpus.iter().map(|s| -seq_logprob(model, s)).collect();
    let events: usize = corpus.iter().map(|s| scored_events(model, s)).sum();
    (math::pairwise_sum(&nll) / events as f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub temperature: f64,
    /// Cap on generated length; the model's own limit applies as well.
    pub max_len: usize,
}

impl SamplerConfig {
    pub fn new(temperature: f64, max_len: usize) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return input("temperature must be > 0");
        }
        if max_len == 0 {
            return input("max_len must be at least 1");
        }
        Ok(SamplerConfig { temperature, max_len })
    }

    pub fn with_temperature(temperature: f64) -> Result<Self> {
        SamplerConfig::new(temperature, usize::MAX)
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            temperature: 1.0,
            max_len: usize::MAX,
        }
    }
}

/// Ancestral sampling from `p^(1/T)` renormalised at every step.
pub fn sample<M: LanguageModel + ?Sized>(model: &M, cfg: &SamplerConfig, rng: &mut SeedRng) -> Sequence {
    let mode = model.length_mode();
    let limit = match mode {
        LengthMode::Fixed { length } => length,
        LengthMode::Variable { max_len } => max_len.min(cfg.max_len),
    };
    let mut ids: Vec<u32> = Vec::new();
    while ids.len() < limit {
        let probs = math::temper(&model.next_probs(&ids), cfg.temperature);
        let next = sample_categorical(&probs, rng) as u32;
        if next == EOS {
            break;
        }
        ids.push(next);
    }
    Sequence::new(ids).expect("models never emit EOS first")
}

/// A tabulated Markov chain used as a generator, mostly for analytic
/// scenarios where the generator law must be exact.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    source: MarkovSource,
    vocab: Vocab,
}

impl MarkovModel {
    pub fn new(source: MarkovSource) -> Self {
        let vocab = source.vocab();
        MarkovModel { source, vocab }
    }

    pub fn source(&self) -> &MarkovSource {
        &self.source
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }
}

impl LanguageModel for MarkovModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn length_mode(&self) -> LengthMode {
        LengthMode::Fixed {
            length: self.source.length(),
        }
    }

    fn next_probs(&self, prefix: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab.len()];
        if let Some(row) = self.source.next_state_probs(prefix.last().copied()) {
            out[NUM_RESERVED..].copy_from_slice(row);
        }
        out
    }
}

/// Any trained generator.
#[derive(Debug, Clone)]
pub enum GenModel {
    NGram(NGramLM),
    Neural(NeuralLM),
    Markov(MarkovModel),
}

impl LanguageModel for GenModel {
    fn vocab(&self) -> &Vocab {
        match self {
            GenModel::NGram(m) => m.vocab(),
            GenModel::Neural(m) => m.vocab(),
            GenModel::Markov(m) => m.vocab(),
        }
    }

    fn length_mode(&self) -> LengthMode {
        match self {
            GenModel::NGram(m) => m.length_mode(),
            GenModel::Neural(m) => m.length_mode(),
            GenModel::Markov(m) => m.length_mode(),
        }
    }

    fn next_probs(&self, prefix: &[u32]) -> Vec<f64> {
        match self {
            GenModel::NGram(m) => m.next_probs(prefix),
            GenModel::Neural(m) => m.next_probs(prefix),
            GenModel::Markov(m) => m.next_probs(prefix),
        }
    }
}

/// Training configuration, tagged by generator kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GenConfig {
    Ngram(NGramConfig),
    Neural(NeuralConfig),
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig::Ngram(NGramConfig::default())
    }
}

/// What training reports besides the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenTrainReport {
    pub train_perplexity: f64,
    pub valid_perplexity: f64,
    pub parameter_count: usize,
    /// Per-epoch mean training NLL (neural models only).
    pub epoch_train_nll: Vec<f64>,
    /// Per-epoch mean validation NLL (neural models only).
    pub epoch_valid_nll: Vec<f64>,
}

/// Infer the length mode: fixed when requested, otherwise EOS-terminated.
fn length_mode_for(train: &Corpus, fixed_length: bool, max_len: usize) -> Result<LengthMode> {
    if fixed_length {
        let length = train.sequences()[0].len();
        if train.iter().any(|s| s.len() != length) {
            return input("fixed-length training requires sequences of equal length");
        }
        Ok(LengthMode::Fixed { length })
    } else {
        if max_len == 0 {
            return input("max_len must be at least 1");
        }
        Ok(LengthMode::Variable { max_len })
    }
}

/// Maximum-likelihood training. The n-gram model is fitted in closed form;
/// the neural model by minibatch gradient descent with early stopping on
/// validation NLL.
pub fn train_mle(
    vocab: &Vocab,
    train: &Corpus,
    valid: &Corpus,
    config: &GenConfig,
    seed: u64,
) -> Result<(GenModel, GenTrainReport)> {
    train.check_vocab(vocab)?;
    valid.check_vocab(vocab)?;
    match config {
        GenConfig::Ngram(cfg) => {
            let mode = length_mode_for(train, cfg.fixed_length, cfg.max_len)?;
            let model = NGramLM::fit(vocab.clone(), mode, cfg, train)?;
            let report = GenTrainReport {
                train_perplexity: perplexity(&model, train),
                valid_perplexity: perplexity(&model, valid),
                parameter_count: model.parameter_count(),
                ..Default::default()
            };
            Ok((GenModel::NGram(model), report))
        }
        GenConfig::Neural(cfg) => {
            let mode = length_mode_for(train, cfg.fixed_length, cfg.max_len)?;
            let (model, nr) = NeuralLM::train(vocab.clone(), mode, cfg, train, valid, seed)?;
            let report = GenTrainReport {
                train_perplexity: perplexity(&model, train),
                valid_perplexity: perplexity(&model, valid),
                parameter_count: model.parameter_count(),
                epoch_train_nll: nr.train_nll,
                epoch_valid_nll: nr.valid_nll,
            };
            Ok((GenModel::Neural(model), report))
        }
    }
}

impl GenModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            GenModel::NGram(m) => m.to_checkpoint(),
            GenModel::Neural(m) => m.to_checkpoint(),
            GenModel::Markov(m) => {
                let src = m.source();
                let mut ck = Checkpoint::new("markov", m.vocab.clone());
                ck.config = serde_json::json!({ "length": src.length() });
                ck.params.insert("initial".into(), src.initial().to_vec());
                ck.params.insert("transition".into(), src.transition().concat());
                ck
            }
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ck.kind.as_str() {
            "ngram" => Ok(GenModel::NGram(NGramLM::from_checkpoint(ck)?)),
            "neural" => Ok(GenModel::Neural(NeuralLM::from_checkpoint(ck)?)),
            "markov" => {
                let initial = ck.param("initial")?.to_vec();
                let flat = ck.param("transition")?;
                let k = initial.len();
                if flat.len() != k * k {
                    return input("markov checkpoint transition has wrong size");
                }
                let length = ck.config["length"]
                    .as_u64()
                    .ok_or_else(|| crate::Error::Input("markov checkpoint lacks length".into()))?
                    as usize;
                let source =
                    MarkovSource::new(initial, flat.chunks(k).map(<[f64]>::to_vec).collect(), length)?;
                Ok(GenModel::Markov(MarkovModel::new(source)))
            }
            other => input(format!("checkpoint kind {other:?} is not a generator")),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        GenModel::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// A training configuration with the same architecture, if the model
    /// was trained rather than specified.
    pub fn architecture(&self) -> Option<GenConfig> {
        match self {
            GenModel::NGram(m) => Some(GenConfig::Ngram(m.config())),
            GenModel::Neural(m) => Some(GenConfig::Neural(m.config())),
            GenModel::Markov(_) => None,
        }
    }

    /// Token embedding table (`vocab.len()` rows) when the model has one.
    pub fn embeddings(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            GenModel::Neural(m) => Some(m.embedding_rows()),
            _ => None,
        }
    }
}

/// Padding of the context window before the first token.
pub(crate) fn context_window(prefix: &[u32], width: usize) -> Vec<u32> {
    let mut ctx = vec![BOS; width];
    let take = prefix.len().min(width);
    ctx[width - take..].copy_from_slice(&prefix[prefix.len() - take..]);
    ctx
}


/// Anything that can emit sequences: a tempered generator, or a generator
/// wrapped in a rejection filter.
pub trait SequenceSampler {
    fn vocab(&self) -> &Vocab;

    fn draw(&self, rng: &mut SeedRng) -> Result<Sequence>;

    fn draw_corpus(&self, n: usize, rng: &mut SeedRng) -> Result<Corpus> {
        let seqs = (0..n).map(|_| self.draw(rng)).collect::<Result<Vec<_>>>()?;
        Corpus::new(seqs, crate::data::Split::Samples)
    }
}

/// A language model paired with its sampling configuration.
#[derive(Debug, Clone, Copy)]
pub struct Tempered<'a, M: ?Sized> {
    pub model: &'a M,
    pub cfg: SamplerConfig,
}

impl<'a, M: LanguageModel + ?Sized> Tempered<'a, M> {
    pub fn new(model: &'a M, cfg: SamplerConfig) -> Self {
        Tempered { model, cfg }
    }
}

impl<M: LanguageModel + ?Sized> SequenceSampler for Tempered<'_, M> {
    fn vocab(&self) -> &Vocab {
        self.model.vocab()
    }

    fn draw(&self, rng: &mut SeedRng) -> Result<Sequence> {
        Ok(sample(self.model, &self.cfg, rng))
    }
}

/// Draws from a Markov source directly (the "real" distribution in
/// synthetic scenarios).
impl SequenceSampler for MarkovModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn draw(&self, rng: &mut SeedRng) -> Result<Sequence> {
        Ok(self.source.sample(rng))
    }
}

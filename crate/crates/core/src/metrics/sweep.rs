use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{bleu, embed, fed, lm_score, reverse_lm_score, self_bleu, BleuConfig, EmbeddingModel};
use crate::data::{Corpus, Split, Vocab};
use crate::disc::{error_rate, train_on_corpora, DiscConfig, Scorer};
use crate::error::{input, Error, Result};
use crate::filter::{check_c, estimate_uc, sample_streams, FilteredGenerator, UcConfig};
use crate::genmodel::{GenConfig, GenModel, LanguageModel, SamplerConfig, SequenceSampler, Tempered};
use crate::rng::{derive_seed, derived};

pub const CSV_HEADER: &str = "temperature,c,stream,bleu5,self_bleu5,lm_score,rev_lm_score,fed,error_rate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    SelfBleu,
    Lm,
    Rlm,
    Fed,
    Err,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Bleu,
        Metric::SelfBleu,
        Metric::Lm,
        Metric::Rlm,
        Metric::Fed,
        Metric::Err,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::SelfBleu => "selfbleu",
            Metric::Lm => "lm",
            Metric::Rlm => "rlm",
            Metric::Fed => "fed",
            Metric::Err => "err",
        }
    }

    /// Parse a comma-separated list such as `bleu,selfbleu,lm`.
    pub fn parse_list(s: &str) -> Result<Vec<Metric>> {
        let mut out: Vec<Metric> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return input("metric list is empty");
        }
        Ok(out)
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Baseline,
    Accepted,
    Rejected,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Baseline => "baseline",
            Stream::Accepted => "accepted",
            Stream::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub temperatures: Vec<f64>,
    /// Acceptance ratios; empty means no filter.
    pub c_values: Vec<f64>,
    pub metrics: Vec<Metric>,
    /// Samples per stream and grid point.
    pub samples: usize,
    pub max_len: usize,
    pub bleu: BleuConfig,
    /// At most this many real test sequences serve as BLEU references.
    pub references: usize,
    pub uc: UcConfig,
    pub disc: DiscConfig,
    pub reverse_lm: GenConfig,
    pub reverse_min_samples: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            temperatures: vec![0.9, 1.0, 1.1, 1.2],
            c_values: Vec::new(),
            metrics: vec![Metric::Bleu, Metric::SelfBleu, Metric::Lm],
            samples: 1000,
            max_len: 64,
            bleu: BleuConfig::default(),
            references: 5000,
            uc: UcConfig::default(),
            disc: DiscConfig::default(),
            reverse_lm: GenConfig::default(),
            reverse_min_samples: super::DEFAULT_MIN_REVERSE_SAMPLES,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperatures.is_empty() {
            return input("temperature list is empty");
        }
        if self.temperatures.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return input("temperature must be > 0");
        }
        for &c in &self.c_values {
            check_c(c)?;
        }
        if self.samples < 2 {
            return input("need at least two samples per stream");
        }
        if self.references == 0 {
            return input("references must be positive");
        }
        Ok(())
    }
}

/// What the sweep evaluates against.
pub struct SweepInputs<'a> {
    pub generator: &'a GenModel,
    /// Required when any `c < 1` is requested.
    pub scorer: Option<&'a (dyn Scorer + Sync)>,
    /// Language model trained on real data, for the LM score.
    pub oracle_lm: Option<&'a GenModel>,
    /// Real training data (negatives pool for the error-rate classifier).
    pub real_train: &'a Corpus,
    pub real_test: &'a Corpus,
    pub embedding: Option<&'a EmbeddingModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub c: f64,
    pub stream: Stream,
    /// Boundary used for the filtered streams.
    pub u_c: Option<f64>,
    /// Observed acceptance ratio of the filtered run.
    pub acceptance: Option<f64>,
    pub bleu: Option<f64>,
    pub self_bleu: Option<f64>,
    pub lm_score: Option<f64>,
    pub rev_lm_score: Option<f64>,
    pub fed: Option<f64>,
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn rows_for(&self, stream: Stream) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.stream == stream)
    }

    /// CSV with the fixed column order; metrics that were not computed are
    /// left empty.
    pub fn to_csv(&self) -> String {
        let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.temperature,
                r.c,
                r.stream.name(),
                cell(r.bleu),
                cell(r.self_bleu),
                cell(r.lm_score),
                cell(r.rev_lm_score),
                cell(r.fed),
                cell(r.error_rate),
            );
        }
        out
    }
}

/// Error rate of a classifier trained from scratch to tell `samples` from
/// real data.
///
/// The samples are split 70/10/20 into train, validation and test parts;
/// the real side uses equally sized slices of `real_pool` for training and
/// validation and `real_test` for testing.
pub fn error_rate_fresh(
    vocab: &Vocab,
    real_pool: &Corpus,
    real_test: &Corpus,
    samples: &Corpus,
    cfg: &DiscConfig,
    seed: u64,
) -> Result<f64> {
    let n = samples.len();
    let n_test = n / 5;
    let n_valid = (n / 10).max(1);
    let n_train = (n - n_test - n_valid).min(real_pool.len().saturating_sub(n_valid));
    if n_test == 0 || n_train == 0 {
        return input(format!(
            "too few sequences for a train/valid/test split ({n} samples)"
        ));
    }
    let seqs = samples.sequences();
    let real = real_pool.sequences();
    let part = |s: &[crate::data::Sequence], split| Corpus::new(s.to_vec(), split);
    let (disc, _) = train_on_corpora(
        vocab,
        &part(&real[..n_train], Split::Train)?,
        &part(&real[n_train..n_train + n_valid], Split::Valid)?,
        &part(&seqs[..n_train], Split::Samples)?,
        &part(&seqs[n_train..n_train + n_valid], Split::Samples)?,
        cfg,
        None,
        seed,
    )?;
    let fake_test = part(&seqs[n - n_test..], Split::Samples)?;
    Ok(error_rate(&disc, real_test, &fake_test))
}

struct Evaluator<'a> {
    inputs: &'a SweepInputs<'a>,
    cfg: &'a SweepConfig,
    references: Corpus,
    real_emb: Option<nalgebra::DMatrix<f64>>,
}

impl Evaluator<'_> {
    fn row(&self, t_index: usize, temperature: f64, c: f64, stream: Stream, xs: &Corpus) -> Result<SweepRow> {
        let vocab = self.inputs.generator.vocab();
        let mut row = SweepRow {
            temperature,
            c,
            stream,
            u_c: None,
            acceptance: None,
            bleu: None,
            self_bleu: None,
            lm_score: None,
            rev_lm_score: None,
            fed: None,
            error_rate: None,
        };
        // everything below depends only on the samples and the temperature
        // index, so identical streams give identical rows
        let seed = derive_seed(self.cfg.seed, "sweep-metric", t_index as u64);
        for &m in &self.cfg.metrics {
            match m {
                Metric::Bleu => row.bleu = Some(bleu(xs, &self.references, &self.cfg.bleu)?),
                Metric::SelfBleu => row.self_bleu = Some(self_bleu(xs, &self.cfg.bleu)?),
                Metric::Lm => {
                    let lm = self
                        .inputs
                        .oracle_lm
                        .ok_or_else(|| Error::Input("lm metric needs an oracle language model".into()))?;
                    row.lm_score = Some(lm_score(lm, xs));
                }
                Metric::Rlm => {
                    row.rev_lm_score = Some(reverse_lm_score(
                        vocab,
                        xs,
                        self.inputs.real_test,
                        &self.cfg.reverse_lm,
                        self.cfg.reverse_min_samples,
                        seed,
                    )?)
                }
                Metric::Fed => {
                    let (em, real) = match (self.inputs.embedding, &self.real_emb) {
                        (Some(em), Some(real)) => (em, real),
                        _ => return input("fed metric needs an embedding model"),
                    };
                    row.fed = Some(fed(real, &embed(xs, em))?);
                }
                Metric::Err => {
                    row.error_rate = Some(error_rate_fresh(
                        vocab,
                        self.inputs.real_train,
                        self.inputs.real_test,
                        xs,
                        &self.cfg.disc,
                        seed,
                    )?)
                }
            }
        }
        Ok(row)
    }
}

/// Evaluate the generator over a temperature grid.
///
/// Per temperature there is one baseline row (reported with `c = 1`) and,
/// for every `c < 1`, an accepted and a rejected row. The boundary is
/// re-estimated at every temperature. `c = 1` yields an accepted row whose
/// samples are exactly the baseline samples.
pub fn temperature_sweep(inputs: &SweepInputs<'_>, cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let vocab = inputs.generator.vocab();
    inputs.real_test.check_vocab(vocab)?;
    inputs.real_train.check_vocab(vocab)?;
    let eval = Evaluator {
        inputs,
        cfg,
        references: inputs.real_test.take(cfg.references)?,
        real_emb: inputs.embedding.map(|em| embed(inputs.real_test, em)),
    };
    let mut rows = Vec::new();
    for (ti, &t) in cfg.temperatures.iter().enumerate() {
        let sampler = Tempered::new(inputs.generator, SamplerConfig::new(t, cfg.max_len)?);
        let baseline = sampler.draw_corpus(cfg.samples, &mut derived(cfg.seed, "sweep-sample", ti as u64))?;
        rows.push(eval.row(ti, t, 1.0, Stream::Baseline, &baseline)?);
        for (ci, &c) in cfg.c_values.iter().enumerate() {
            if c == 1.0 {
                let mut row = eval.row(ti, t, c, Stream::Accepted, &baseline)?;
                row.u_c = Some(0.0);
                row.acceptance = Some(1.0);
                rows.push(row);
                continue;
            }
            let scorer = inputs
                .scorer
                .ok_or_else(|| Error::Input("filtered streams need a discriminator".into()))?;
            let index = (ti * cfg.c_values.len() + ci) as u64;
            let est = estimate_uc(
                &sampler,
                scorer,
                c,
                &cfg.uc,
                &mut derived(cfg.seed, "sweep-uc", index),
            )?;
            let fg = FilteredGenerator::new(&sampler, scorer, est.params());
            let out = sample_streams(
                &fg,
                cfg.samples,
                cfg.samples,
                &mut derived(cfg.seed, "sweep-filter", index),
            )?;
            let rejected = Corpus::new(out.rejected, Split::Samples)?;
            for (stream, xs) in [(Stream::Accepted, &out.accepted), (Stream::Rejected, &rejected)] {
                let mut row = eval.row(ti, t, c, stream, xs)?;
                row.u_c = Some(est.u_c);
                row.acceptance = Some(out.stats.acceptance_ratio());
                rows.push(row);
            }
        }
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MarkovSource;
    use crate::genmodel::{train_mle, NGramConfig};
    use crate::rng::seeded;

    struct Setup {
        gen: GenModel,
        oracle: GenModel,
        train: Corpus,
        test: Corpus,
        em: EmbeddingModel,
    }

    fn setup() -> Setup {
        let src = MarkovSource::new(
            vec![0.5, 0.3, 0.2],
            vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.7, 0.2, 0.1]],
            4,
        )
        .unwrap();
        let vocab = src.vocab();
        let train = src.synth(2000, &mut seeded(1), Split::Train).unwrap();
        let test = src.synth(500, &mut seeded(2), Split::Test).unwrap();
        let fixed = |order| {
            GenConfig::Ngram(NGramConfig {
                order,
                delta: 0.01,
                fixed_length: true,
                ..Default::default()
            })
        };
        let (gen, _) = train_mle(&vocab, &train.take(200).unwrap(), &test, &fixed(1), 0).unwrap();
        let (oracle, _) = train_mle(&vocab, &train, &test, &fixed(2), 0).unwrap();
        let em = EmbeddingModel::fit_ppmi_svd(&vocab, &train, 64, 2).unwrap();
        Setup {
            gen,
            oracle,
            train,
            test,
            em,
        }
    }

    fn inputs(s: &Setup) -> SweepInputs<'_> {
        SweepInputs {
            generator: &s.gen,
            scorer: None,
            oracle_lm: Some(&s.oracle),
            real_train: &s.train,
            real_test: &s.test,
            embedding: Some(&s.em),
        }
    }

    #[test]
    fn single_temperature_matches_direct_calls() {
        let s = setup();
        let cfg = SweepConfig {
            temperatures: vec![1.0],
            metrics: vec![Metric::Bleu, Metric::SelfBleu, Metric::Lm, Metric::Fed],
            samples: 300,
            seed: 11,
            ..Default::default()
        };
        let report = temperature_sweep(&inputs(&s), &cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        let sampler = Tempered::new(&s.gen, SamplerConfig::new(1.0, cfg.max_len).unwrap());
        let xs = sampler
            .draw_corpus(300, &mut derived(11, "sweep-sample", 0))
            .unwrap();
        let row = &report.rows[0];
        assert_eq!(row.bleu, Some(bleu(&xs, &s.test, &cfg.bleu).unwrap()));
        assert_eq!(row.self_bleu, Some(self_bleu(&xs, &cfg.bleu).unwrap()));
        assert_eq!(row.lm_score, Some(lm_score(&s.oracle, &xs)));
        assert_eq!(
            row.fed,
            Some(fed(&embed(&s.test, &s.em), &embed(&xs, &s.em)).unwrap())
        );
        assert_eq!(row.rev_lm_score, None);
    }

    #[test]
    fn default_grid_and_identity_filter() {
        let s = setup();
        let cfg = SweepConfig {
            c_values: vec![1.0],
            samples: 200,
            ..Default::default()
        };
        let report = temperature_sweep(&inputs(&s), &cfg).unwrap();
        assert_eq!(report.rows_for(Stream::Baseline).count(), 4);
        assert_eq!(report.rows_for(Stream::Accepted).count(), 4);
        for (b, a) in report
            .rows_for(Stream::Baseline)
            .zip(report.rows_for(Stream::Accepted))
        {
            assert_eq!(
                (b.bleu, b.self_bleu, b.lm_score),
                (a.bleu, a.self_bleu, a.lm_score)
            );
        }
        let csv = report.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.lines().nth(1).unwrap().ends_with(",,,"));
    }

    #[test]
    fn filtering_requires_a_scorer_and_valid_grid() {
        let s = setup();
        let cfg = SweepConfig {
            temperatures: vec![1.0],
            c_values: vec![0.5],
            samples: 50,
            ..Default::default()
        };
        assert!(temperature_sweep(&inputs(&s), &cfg).is_err());
        let bad = SweepConfig {
            temperatures: vec![0.0],
            ..Default::default()
        };
        assert!(temperature_sweep(&inputs(&s), &bad).is_err());
        assert_eq!(
            Metric::parse_list("bleu, selfbleu,err").unwrap(),
            vec![Metric::Bleu, Metric::SelfBleu, Metric::Err]
        );
        assert!(Metric::parse_list("bleu,nope").is_err());
    }
}

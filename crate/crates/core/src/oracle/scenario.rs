//! Bundled enumerable scenarios.
//!
//! * `s1`: two sequences, data law (0.5, 0.5), generator law (0.8, 0.2).
//! * `s2`: 3 symbols, length 4; a unigram model fitted to 5000 samples of a
//!   first-order chain, so the generator misses the transition structure.
//! * `s3`: the same chain with a unigram model fitted to only 10 samples
//!   under heavy smoothing, further from the data than `s2`.
//! * `s4`: 4 symbols, length 5, unigram generator; used to study how
//!   classification difficulty depends on sequence length.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::exact::{enumerate_distribution, enumerate_source, ExactDistribution};
use crate::data::{Corpus, MarkovSource, Split, Vocab};
use crate::error::{input, Error, Result};
use crate::genmodel::{train_mle, GenConfig, GenModel, MarkovModel, NGramConfig};
use crate::rng::derived;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3, ScenarioId::S4];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioId::S1 => "s1",
            ScenarioId::S2 => "s2",
            ScenarioId::S3 => "s3",
            ScenarioId::S4 => "s4",
        }
    }
}

impl FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s1" => Ok(ScenarioId::S1),
            "s2" => Ok(ScenarioId::S2),
            "s3" => Ok(ScenarioId::S3),
            "s4" => Ok(ScenarioId::S4),
            other => input(format!("unknown scenario {other:?} (expected s1..s4)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// The generator law is given exactly.
    Exact { source: MarkovSource },
    /// Fit an n-gram model to the first `train_size` real training sequences.
    Ngram {
        order: usize,
        delta: f64,
        train_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleScenario {
    pub id: ScenarioId,
    /// Data law.
    pub source: MarkovSource,
    pub generator: GeneratorSpec,
    /// Acceptance ratios studied on this scenario.
    pub c_values: Vec<f64>,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
}

fn designed_chain(length: usize) -> MarkovSource {
    MarkovSource::new(
        vec![0.5, 0.3, 0.2],
        vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.7, 0.2, 0.1]],
        length,
    )
    .expect("valid chain")
}

impl OracleScenario {
    pub fn builtin(id: ScenarioId) -> Self {
        match id {
            ScenarioId::S1 => OracleScenario {
                id,
                source: MarkovSource::new(vec![0.5, 0.5], vec![vec![0.5, 0.5]; 2], 1).expect("valid"),
                generator: GeneratorSpec::Exact {
                    source: MarkovSource::new(vec![0.8, 0.2], vec![vec![0.5, 0.5]; 2], 1).expect("valid"),
                },
                c_values: vec![0.2, 0.4, 0.5, 0.8],
                train_size: 2000,
                valid_size: 500,
                test_size: 2000,
            },
            ScenarioId::S2 => OracleScenario {
                id,
                source: designed_chain(4),
                generator: GeneratorSpec::Ngram {
                    order: 1,
                    delta: 0.01,
                    train_size: 5000,
                },
                c_values: vec![0.2, 0.5, 0.8],
                train_size: 5000,
                valid_size: 1000,
                test_size: 5000,
            },
            ScenarioId::S3 => OracleScenario {
                id,
                source: designed_chain(4),
                generator: GeneratorSpec::Ngram {
                    order: 1,
                    delta: 0.5,
                    train_size: 10,
                },
                c_values: vec![0.2, 0.5, 0.8],
                train_size: 5000,
                valid_size: 1000,
                test_size: 5000,
            },
            ScenarioId::S4 => OracleScenario {
                id,
                source: MarkovSource::new(
                    vec![0.4, 0.3, 0.2, 0.1],
                    vec![
                        vec![0.05, 0.7, 0.15, 0.1],
                        vec![0.1, 0.05, 0.75, 0.1],
                        vec![0.1, 0.1, 0.05, 0.75],
                        vec![0.7, 0.1, 0.1, 0.1],
                    ],
                    5,
                )
                .expect("valid"),
                generator: GeneratorSpec::Ngram {
                    order: 1,
                    delta: 0.01,
                    train_size: 5000,
                },
                c_values: vec![0.5],
                train_size: 5000,
                valid_size: 1000,
                test_size: 5000,
            },
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s: OracleScenario = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let symbols = self.source.states();
        let size = (symbols as f64).powi(self.source.length() as i32);
        if size > 7776.0 {
            return input("scenario domain must stay within 7776 sequences");
        }
        if let GeneratorSpec::Exact { source } = &self.generator {
            if source.states() != symbols || source.length() != self.source.length() {
                return input("generator and data laws must share a domain");
            }
        }
        if self.train_size == 0 || self.valid_size == 0 || self.test_size == 0 {
            return input("scenario split sizes must be positive");
        }
        for &c in &self.c_values {
            crate::filter::check_c(c)?;
        }
        Ok(())
    }

    /// Draw real splits and build the generator. Every random stream is
    /// derived from `seed`.
    pub fn materialize(&self, seed: u64) -> Result<ScenarioData> {
        self.validate()?;
        let vocab = self.source.vocab();
        let name = self.id.name();
        let train = self
            .source
            .synth(self.train_size, &mut derived(seed, name, 0), Split::Train)?;
        let valid = self
            .source
            .synth(self.valid_size, &mut derived(seed, name, 1), Split::Valid)?;
        let test = self
            .source
            .synth(self.test_size, &mut derived(seed, name, 2), Split::Test)?;
        let generator = match &self.generator {
            GeneratorSpec::Exact { source } => GenModel::Markov(MarkovModel::new(source.clone())),
            GeneratorSpec::Ngram {
                order,
                delta,
                train_size,
            } => {
                let cfg = GenConfig::Ngram(NGramConfig {
                    order: *order,
                    delta: *delta,
                    fixed_length: true,
                    ..Default::default()
                });
                train_mle(&vocab, &train.take(*train_size)?, &valid, &cfg, seed)?.0
            }
        };
        let p_r = enumerate_source(&self.source)?;
        let p_theta = enumerate_distribution(&generator)?;
        Ok(ScenarioData {
            real: MarkovModel::new(self.source.clone()),
            vocab,
            generator,
            train,
            valid,
            test,
            p_r,
            p_theta,
        })
    }
}

/// A scenario with its data drawn and its generator built.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub vocab: Vocab,
    /// Sampler for the data law.
    pub real: MarkovModel,
    pub generator: GenModel,
    pub train: Corpus,
    pub valid: Corpus,
    pub test: Corpus,
    pub p_r: ExactDistribution,
    pub p_theta: ExactDistribution,
}

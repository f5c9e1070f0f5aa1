//! Experiment configuration: a TOML file with a strict schema.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! scenario = "s2"
//!
//! [filter]
//! c = [0.2, 0.5, 0.8]
//!
//! [sweep]
//! temperatures = [0.9, 1.0, 1.1, 1.2]
//! metrics = ["bleu", "selfbleu", "lm"]
//! ```

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use filtergen::disc::DiscConfig;
use filtergen::filter::{check_c, UcConfig};
use filtergen::genmodel::{GenConfig, NGramConfig};
use filtergen::metrics::{EmbeddingKind, Metric};
use filtergen::oracle::{OracleScenario, ScenarioId};

use crate::error::{CliError, CliResult};

const TOP_LEVEL: [&str; 8] = [
    "seed",
    "out_dir",
    "data",
    "generator",
    "discriminator",
    "filter",
    "sweep",
    "oracle",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    scenario: Option<String>,
    scenario_file: Option<PathBuf>,
    train: Option<PathBuf>,
    valid: Option<PathBuf>,
    test: Option<PathBuf>,
    #[serde(default = "default_vocab_size")]
    vocab_size: usize,
    #[serde(default = "default_max_len")]
    max_len: usize,
}

fn default_vocab_size() -> usize {
    10_000
}

fn default_max_len() -> usize {
    64
}

/// Where the real data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Scenario(Box<OracleScenario>),
    Files {
        train: PathBuf,
        valid: PathBuf,
        test: PathBuf,
        vocab_size: usize,
        max_len: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    /// Target acceptance ratios.
    pub c: Vec<f64>,
    /// Accepted (and rejected) samples written per `c`.
    pub samples: usize,
    pub search: UcConfig,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            c: vec![0.2, 0.5, 0.8],
            samples: 10_000,
            search: UcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub temperatures: Vec<f64>,
    pub metrics: Vec<String>,
    pub samples: usize,
    pub references: usize,
    pub bleu_order: usize,
    pub reverse_min_samples: usize,
    pub embedding: EmbeddingKind,
    pub embedding_dim: usize,
    /// Model used for LM and reverse-LM scores; defaults to the generator's
    /// architecture.
    pub lm: Option<GenConfig>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            temperatures: vec![0.9, 1.0, 1.1, 1.2],
            metrics: vec!["bleu".into(), "selfbleu".into(), "lm".into()],
            samples: 1000,
            references: 5000,
            bleu_order: 5,
            reverse_min_samples: filtergen::metrics::DEFAULT_MIN_REVERSE_SAMPLES,
            embedding: EmbeddingKind::PpmiSvd,
            embedding_dim: 64,
            lm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub monte_carlo_samples: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            monte_carlo_samples: 200_000,
        }
    }
}

/// A validated configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub data: DataSource,
    /// Trained on the real training split. Scenarios bring their own
    /// generator when this is absent.
    pub generator: Option<GenConfig>,
    pub discriminator: DiscConfig,
    pub filter: FilterSection,
    pub sweep: SweepSection,
    pub oracle: OracleSection,
}

impl ExperimentConfig {
    pub fn metrics(&self) -> Vec<Metric> {
        // validated on load
        self.sweep.metrics.iter().filter_map(|m| m.parse().ok()).collect()
    }

    pub fn scenario(&self) -> Option<&OracleScenario> {
        match &self.data {
            DataSource::Scenario(s) => Some(s),
            DataSource::Files { .. } => None,
        }
    }

    /// Model configuration for LM scores: explicit, else the generator's,
    /// else a bigram suited to the data.
    pub fn lm_config(&self) -> GenConfig {
        if let Some(c) = self.sweep.lm.clone().or_else(|| self.generator.clone()) {
            return c;
        }
        match &self.data {
            DataSource::Scenario(s) => GenConfig::Ngram(NGramConfig {
                order: 2,
                delta: 0.01,
                fixed_length: true,
                max_len: s.source.length(),
            }),
            DataSource::Files { max_len, .. } => GenConfig::Ngram(NGramConfig {
                max_len: *max_len,
                ..Default::default()
            }),
        }
    }

    /// Digest of everything that affects results (the output directory
    /// does not).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        crate::manifest::sha256_hex(&json)
    }
}

fn section<T: DeserializeOwned + Default>(
    table: &toml::Table,
    key: &str,
    errors: &mut Vec<String>,
) -> Option<T> {
    match table.get(key) {
        None => Some(T::default()),
        Some(v) => match v.clone().try_into::<T>() {
            Ok(t) => Some(t),
            Err(e) => {
                errors.push(format!("[{key}] {}", e.message().trim()));
                None
            }
        },
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn data_source(raw: RawData, base: &Path, errors: &mut Vec<String>) -> Option<DataSource> {
    let files = [&raw.train, &raw.valid, &raw.test];
    let any_file = files.iter().any(|f| f.is_some());
    let chosen = [raw.scenario.is_some(), raw.scenario_file.is_some(), any_file]
        .iter()
        .filter(|&&b| b)
        .count();
    if chosen != 1 {
        errors.push("[data] set exactly one of scenario, scenario_file, or train/valid/test".into());
        return None;
    }
    if let Some(name) = raw.scenario {
        return match name.parse::<ScenarioId>() {
            Ok(id) => Some(DataSource::Scenario(Box::new(OracleScenario::builtin(id)))),
            Err(e) => {
                errors.push(format!("[data] {e}"));
                None
            }
        };
    }
    if let Some(path) = raw.scenario_file {
        let path = resolve(base, &path);
        return match OracleScenario::load(&path) {
            Ok(s) => Some(DataSource::Scenario(Box::new(s))),
            Err(e) => {
                errors.push(format!("[data] scenario_file {}: {e}", path.display()));
                None
            }
        };
    }
    let mut resolved = Vec::new();
    for (name, f) in ["train", "valid", "test"].into_iter().zip(files) {
        match f {
            None => errors.push(format!("[data] {name} required alongside the other corpus files")),
            Some(p) => {
                let p = resolve(base, p);
                if !p.is_file() {
                    errors.push(format!("[data] {name}: file not found: {}", p.display()));
                }
                resolved.push(p);
            }
        }
    }
    if raw.vocab_size == 0 || raw.max_len == 0 {
        errors.push("[data] vocab_size and max_len must be positive".into());
    }
    if resolved.len() != 3 {
        return None;
    }
    let test = resolved.pop()?;
    let valid = resolved.pop()?;
    let train = resolved.pop()?;
    Some(DataSource::Files {
        train,
        valid,
        test,
        vocab_size: raw.vocab_size,
        max_len: raw.max_len,
    })
}

/// Parse and check a configuration, reporting every problem at once.
/// Relative paths are resolved against the file's directory.
pub fn validate_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

pub fn parse_config(text: &str, base: &Path) -> CliResult<ExperimentConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
    let mut errors = Vec::new();
    for key in table.keys() {
        if !TOP_LEVEL.contains(&key.as_str()) {
            errors.push(format!("unknown key `{key}`"));
        }
    }
    let seed = match table.get("seed") {
        None => {
            errors.push("seed required".into());
            None
        }
        Some(toml::Value::Integer(s)) if *s >= 0 => Some(*s as u64),
        Some(_) => {
            errors.push("seed must be a non-negative integer".into());
            None
        }
    };
    let out_dir = match table.get("out_dir") {
        None => None,
        Some(toml::Value::String(s)) => Some(resolve(base, Path::new(s))),
        Some(_) => {
            errors.push("out_dir must be a string".into());
            None
        }
    };
    let data = match table.get("data") {
        None => {
            errors.push("[data] section required".into());
            None
        }
        Some(v) => match v.clone().try_into::<RawData>() {
            Ok(raw) => data_source(raw, base, &mut errors),
            Err(e) => {
                errors.push(format!("[data] {}", e.message().trim()));
                None
            }
        },
    };
    let generator = match table.get("generator") {
        None => None,
        Some(v) => match v.clone().try_into::<GenConfig>() {
            Ok(g) => Some(g),
            Err(e) => {
                errors.push(format!("[generator] {}", e.message().trim()));
                None
            }
        },
    };
    if generator.is_none()
        && matches!(data, Some(DataSource::Files { .. }))
        && table.get("generator").is_none()
    {
        errors.push("[generator] required when data comes from corpus files".into());
    }
    let discriminator: Option<DiscConfig> = section(&table, "discriminator", &mut errors);
    if let Some(Err(e)) = discriminator.as_ref().map(DiscConfig::validate) {
        errors.push(format!("[discriminator] {e}"));
    }
    let filter: Option<FilterSection> = section(&table, "filter", &mut errors);
    if let Some(f) = &filter {
        for &c in &f.c {
            if check_c(c).is_err() {
                errors.push(format!("[filter] acceptance ratio {c} must be in (0, 1]"));
            }
        }
        if f.samples == 0 {
            errors.push("[filter] samples must be positive".into());
        }
        let s = &f.search;
        if s.samples_per_round == 0
            || s.rounds == 0
            || s.average_last == 0
            || s.step.is_nan()
            || s.step <= 0.0
        {
            errors.push(
                "[filter.search] samples_per_round, rounds, average_last and step must be positive".into(),
            );
        }
        if !(0.0..=1.0).contains(&s.initial) {
            errors.push("[filter.search] initial must lie in [0, 1]".into());
        }
    }
    let sweep: Option<SweepSection> = section(&table, "sweep", &mut errors);
    if let Some(s) = &sweep {
        if s.temperatures.is_empty() {
            errors.push("[sweep] temperatures must not be empty".into());
        }
        for &t in &s.temperatures {
            if !(t > 0.0 && t.is_finite()) {
                errors.push(format!("[sweep] temperature must be > 0 (got {t})"));
            }
        }
        if s.metrics.is_empty() {
            errors.push("[sweep] metrics must not be empty".into());
        }
        for m in &s.metrics {
            if let Err(e) = m.parse::<Metric>() {
                errors.push(format!("[sweep] {e}"));
            }
        }
        if s.samples < 2 || s.references == 0 || s.bleu_order == 0 || s.embedding_dim == 0 {
            errors.push(
                "[sweep] samples must be at least 2; references, bleu_order and embedding_dim positive"
                    .into(),
            );
        }
    }
    let oracle: Option<OracleSection> = section(&table, "oracle", &mut errors);
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    match (seed, data, discriminator, filter, sweep, oracle) {
        (Some(seed), Some(data), Some(discriminator), Some(filter), Some(sweep), Some(oracle)) => {
            Ok(ExperimentConfig {
                seed,
                out_dir,
                data,
                generator,
                discriminator,
                filter,
                sweep,
                oracle,
            })
        }
        _ => Err(CliError::config("configuration is incomplete")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text, Path::new(".")) {
            Err(CliError::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scenario_config_fills_defaults() {
        let c = parse_config("seed = 3\n[data]\nscenario = \"s2\"\n", Path::new(".")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.filter, FilterSection::default());
        assert_eq!(c.sweep.temperatures, vec![0.9, 1.0, 1.1, 1.2]);
        assert_eq!(c.discriminator, DiscConfig::default());
        assert!(c.scenario().is_some());
    }

    #[test]
    fn collects_all_errors() {
        let e = errors(
            "typo = 1\n[data]\nscenario = \"s2\"\n[sweep]\ntemperatures = [0.0, 1.0]\nmetrics = [\"bleu\", \"nope\"]\n[filter]\nc = [1.5]\n",
        );
        assert!(e.iter().any(|m| m == "seed required"), "{e:?}");
        assert!(e.iter().any(|m| m.contains("temperature must be > 0")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("unknown key `typo`")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("nope")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("1.5")), "{e:?}");
    }

    #[test]
    fn unknown_nested_keys_are_errors() {
        let e = errors("seed = 1\n[data]\nscenario = \"s2\"\n[discriminator]\nlearning_rat = 0.1\n");
        assert!(e.iter().any(|m| m.contains("learning_rat")), "{e:?}");
        let e = errors("seed = 1\n[data]\nscenario = \"s2\"\n[filter.search]\nround = 5\n");
        assert!(e.iter().any(|m| m.contains("round")), "{e:?}");
    }

    #[test]
    fn missing_files_and_generator_reported() {
        let e =
            errors("seed = 1\n[data]\ntrain = \"no/such/train.txt\"\nvalid = \"v.txt\"\ntest = \"t.txt\"\n");
        assert!(
            e.iter().filter(|m| m.contains("file not found")).count() == 3,
            "{e:?}"
        );
        assert!(e.iter().any(|m| m.contains("[generator] required")), "{e:?}");
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = parse_config(
            "seed = 3\nout_dir = \"a\"\n[data]\nscenario = \"s1\"\n",
            Path::new("."),
        )
        .unwrap();
        let b = parse_config(
            "seed = 3\nout_dir = \"b\"\n[data]\nscenario = \"s1\"\n",
            Path::new("."),
        )
        .unwrap();
        let c = parse_config("seed = 4\n[data]\nscenario = \"s1\"\n", Path::new(".")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}

//! Subcommand definitions and their implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use filtergen::data::Vocab;
use filtergen::data::{Corpus, Split};
use filtergen::disc::{error_rate, train_discriminator, DiscConfig, Memo, Scorer, TextCnn};
use filtergen::filter::{estimate_uc, sample_streams, FilterParams, FilteredGenerator, UcConfig};
use filtergen::genmodel::{
    train_mle, GenConfig, GenModel, LanguageModel, SamplerConfig, SequenceSampler, Tempered,
};
use filtergen::metrics::{
    bleu, embed, error_rate_fresh, fed, lm_score, reverse_lm_score, self_bleu, BleuConfig, EmbeddingModel,
    Metric, DEFAULT_MIN_REVERSE_SAMPLES,
};
use filtergen::oracle::{oracle_check, CheckConfig, OracleScenario, ScenarioId};
use filtergen::rng::{derive_seed, derived};

use crate::config::validate_config;
use crate::error::{CliError, CliResult};
use crate::pipeline::{read_json, run_pipeline, write_json};

#[derive(Debug, Parser)]
#[command(
    name = "filtergen",
    version,
    about = "Discriminator-filtered sequence generation"
)]
pub struct Cli {
    /// Master seed (overrides the configuration's).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 guarantees bit-identical results.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Directory for outputs; relative output paths are placed under it.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a generator by maximum likelihood.
    TrainGen(TrainGen),
    /// Train the real-versus-generated classifier.
    TrainDisc(TrainDisc),
    /// Search for the sampling boundary of a target acceptance ratio.
    EstimateUc(EstimateUc),
    /// Draw filtered (or plain) samples.
    Sample(SampleCmd),
    /// Score a sample corpus.
    Evaluate(Evaluate),
    /// Run the experiment pipeline and write the temperature sweep CSV.
    Sweep(SweepCmd),
    /// Check the filter against exact enumeration on a bundled scenario.
    OracleCheck(OracleCheckCmd),
    /// Run all stages of an experiment configuration.
    Pipeline(PipelineCmd),
}

#[derive(Debug, Args)]
pub struct TrainGen {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    /// TOML generator settings, either top-level or under `[generator]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Use this vocabulary instead of building one from the training file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct TrainDisc {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub gen_model: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// TOML classifier settings, either top-level or under `[discriminator]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct EstimateUc {
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long)]
    pub disc: PathBuf,
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleCmd {
    #[arg(long)]
    pub gen: PathBuf,
    /// Without a classifier the generator is sampled directly.
    #[arg(long)]
    pub disc: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Sampling boundary; estimated when omitted.
    #[arg(long = "u-c")]
    pub u_c: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rejected_out: Option<PathBuf>,
    /// Filter statistics; defaults to `<out>.stats.json`.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Evaluate {
    /// Real reference corpus (BLEU references, LM test set).
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub gen: PathBuf,
    /// Real training corpus: fits the LM-score model and the embedding, and
    /// supplies negatives for the error-rate classifier. Defaults to `--real`.
    #[arg(long)]
    pub real_train: Option<PathBuf>,
    #[arg(long)]
    pub disc: Option<PathBuf>,
    #[arg(long, default_value = "bleu,selfbleu,lm")]
    pub metrics: String,
    #[arg(long, default_value_t = 5)]
    pub bleu_order: usize,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleCheckCmd {
    /// Bundled scenario name (s1..s4) or a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 200_000)]
    pub mc_samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineCmd {
    #[arg(long)]
    pub config: PathBuf,
}

struct Globals {
    seed: u64,
    explicit_seed: Option<u64>,
    out_dir: Option<PathBuf>,
}

impl Globals {
    fn place(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn check_flag(ok: bool, msg: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(msg))
    }
}

/// Read a TOML section either from `[section]` or from the top level.
fn toml_section<T: serde::de::DeserializeOwned + Default>(
    path: Option<&Path>,
    section: &str,
) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::config(e.to_string()))?;
    let value = match table.get(section) {
        Some(v) => v.clone(),
        None => toml::Value::Table(table),
    };
    value
        .try_into::<T>()
        .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message().trim())))
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).map_err(filtergen::Error::from)?
    );
    Ok(())
}

fn train_gen(a: &TrainGen, g: &Globals) -> CliResult<()> {
    let config: GenConfig = toml_section(a.config.as_deref(), "generator")?;
    let lines = Corpus::read_lines(&a.train)?;
    let vocab = match &a.vocab {
        Some(p) => read_json::<Vocab>(p)?,
        None => Vocab::build(&lines, a.vocab_size)?,
    };
    let train = Corpus::from_lines(&lines, &vocab, a.max_len, Split::Train)?;
    let valid = Corpus::read(&a.valid, &vocab, a.max_len, Split::Valid)?;
    let (model, report) = train_mle(
        &vocab,
        &train,
        &valid,
        &config,
        derive_seed(g.seed, "train-gen", 0),
    )?;
    let out = g.place(&a.out);
    model.save(&out)?;
    print_json(&report)
}

fn train_disc(a: &TrainDisc, g: &Globals) -> CliResult<()> {
    let cfg: DiscConfig = toml_section(a.config.as_deref(), "discriminator")?;
    cfg.validate()?;
    let gen = GenModel::load(&a.gen_model)?;
    let vocab = gen.vocab();
    let real = Corpus::read(&a.real, vocab, a.max_len, Split::Train)?;
    let valid = a
        .valid
        .as_ref()
        .map(|p| Corpus::read(p, vocab, a.max_len, Split::Valid))
        .transpose()?;
    let sampler = Tempered::new(&gen, SamplerConfig::new(1.0, a.max_len)?);
    let (disc, report) = train_discriminator(
        &real,
        valid.as_ref(),
        &sampler,
        &cfg,
        None,
        derive_seed(g.seed, "train-disc", 0),
    )?;
    disc.save(&g.place(&a.out))?;
    print_json(&report)
}

fn estimate(a: &EstimateUc, g: &Globals) -> CliResult<()> {
    check_flag(a.c > 0.0 && a.c <= 1.0, "--c must be in (0, 1]")?;
    check_flag(a.temperature > 0.0, "temperature must be > 0")?;
    let gen = GenModel::load(&a.gen)?;
    let disc = TextCnn::load(&a.disc)?;
    let sampler = Tempered::new(&gen, SamplerConfig::new(a.temperature, a.max_len)?);
    let est = estimate_uc(
        &sampler,
        &Memo::new(&disc),
        a.c,
        &UcConfig::default(),
        &mut derived(g.seed, "estimate-uc", 0),
    )?;
    write_json(&g.place(&a.out), &est)?;
    println!("u_c = {}", est.u_c);
    Ok(())
}

fn sample(a: &SampleCmd, g: &Globals) -> CliResult<()> {
    check_flag(a.c > 0.0 && a.c <= 1.0, "--c must be in (0, 1]")?;
    check_flag(a.temperature > 0.0, "temperature must be > 0")?;
    check_flag(a.n > 0, "--n must be positive")?;
    let gen = GenModel::load(&a.gen)?;
    let vocab = gen.vocab().clone();
    let sampler = Tempered::new(&gen, SamplerConfig::new(a.temperature, a.max_len)?);
    let out = g.place(&a.out);
    let disc = a.disc.as_ref().map(|p| TextCnn::load(p)).transpose()?;
    let Some(disc) = disc else {
        check_flag(a.c == 1.0 && a.rejected_out.is_none(), "filtering needs --disc")?;
        let corpus = sampler.draw_corpus(a.n, &mut derived(g.seed, "sample", 0))?;
        corpus.write(&out, &vocab)?;
        return Ok(());
    };
    let scorer = Memo::new(&disc);
    let u_c = match a.u_c {
        Some(u) => u,
        None => {
            estimate_uc(
                &sampler,
                &scorer,
                a.c,
                &UcConfig::default(),
                &mut derived(g.seed, "estimate-uc", 0),
            )?
            .u_c
        }
    };
    let params = FilterParams::new(a.c, u_c).map_err(|e| CliError::config(e.to_string()))?;
    let fg = FilteredGenerator::new(&sampler, &scorer, params);
    let n_rejected = if a.rejected_out.is_some() { a.n } else { 0 };
    let res = sample_streams(&fg, a.n, n_rejected, &mut derived(g.seed, "sample", 0))?;
    res.accepted.write(&out, &vocab)?;
    if let Some(p) = &a.rejected_out {
        Corpus::new(res.rejected, Split::Samples)?.write(&g.place(p), &vocab)?;
    }
    let stats_path = a
        .stats_out
        .as_ref()
        .map(|p| g.place(p))
        .unwrap_or_else(|| PathBuf::from(format!("{}.stats.json", out.display())));
    write_json(&stats_path, &res.stats.summary(a.c))?;
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct EvaluateReport {
    samples: usize,
    bleu: Option<f64>,
    self_bleu: Option<f64>,
    lm_score: Option<f64>,
    rev_lm_score: Option<f64>,
    fed: Option<f64>,
    error_rate: Option<f64>,
    /// Error of the supplied classifier on real versus samples.
    disc_error_rate: Option<f64>,
    disc_mean_score_samples: Option<f64>,
}

fn evaluate(a: &Evaluate, g: &Globals) -> CliResult<()> {
    let metrics = Metric::parse_list(&a.metrics).map_err(|e| CliError::config(e.to_string()))?;
    let gen = GenModel::load(&a.gen)?;
    let vocab = gen.vocab();
    let real = Corpus::read(&a.real, vocab, a.max_len, Split::Test)?;
    let samples = Corpus::read(&a.samples, vocab, a.max_len, Split::Samples)?;
    let real_train = match &a.real_train {
        Some(p) => Corpus::read(p, vocab, a.max_len, Split::Train)?,
        None => real.clone(),
    };
    let lm_config = gen.architecture().unwrap_or_default();
    let bleu_cfg = BleuConfig {
        max_order: a.bleu_order,
        ..Default::default()
    };
    let seed = derive_seed(g.seed, "evaluate", 0);
    let mut r = EvaluateReport {
        samples: samples.len(),
        ..Default::default()
    };
    for m in metrics {
        match m {
            Metric::Bleu => r.bleu = Some(bleu(&samples, &real, &bleu_cfg)?),
            Metric::SelfBleu => r.self_bleu = Some(self_bleu(&samples, &bleu_cfg)?),
            Metric::Lm => {
                let (lm, _) = train_mle(vocab, &real_train, &real, &lm_config, seed)?;
                r.lm_score = Some(lm_score(&lm, &samples));
            }
            Metric::Rlm => {
                r.rev_lm_score = Some(reverse_lm_score(
                    vocab,
                    &samples,
                    &real,
                    &lm_config,
                    DEFAULT_MIN_REVERSE_SAMPLES,
                    seed,
                )?)
            }
            Metric::Fed => {
                let em = EmbeddingModel::fit_ppmi_svd(vocab, &real_train, 64, 2)?;
                r.fed = Some(fed(&embed(&real, &em), &embed(&samples, &em))?);
            }
            Metric::Err => {
                r.error_rate = Some(error_rate_fresh(
                    vocab,
                    &real_train,
                    &real,
                    &samples,
                    &DiscConfig::default(),
                    seed,
                )?)
            }
        }
    }
    if let Some(p) = &a.disc {
        let disc = TextCnn::load(p)?;
        r.disc_error_rate = Some(error_rate(&disc, &real, &samples));
        let scores: Vec<f64> = samples.iter().map(|s| disc.score(s)).collect();
        r.disc_mean_score_samples = Some(scores.iter().sum::<f64>() / scores.len() as f64);
    }
    write_json(&g.place(&a.out), &r)?;
    print_json(&r)
}

fn load_experiment(path: &Path, g: &Globals) -> CliResult<(crate::ExperimentConfig, PathBuf)> {
    let mut cfg = validate_config(path)?;
    if let Some(seed) = g.seed_override() {
        cfg.seed = seed;
    }
    let dir = g
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| {
            let stem = path
                .file_stem()
                .map_or("run".into(), |s| s.to_string_lossy().into_owned());
            PathBuf::from(format!("{stem}_run"))
        });
    Ok((cfg, dir))
}

fn sweep(a: &SweepCmd, g: &Globals) -> CliResult<()> {
    let (cfg, dir) = load_experiment(&a.config, g)?;
    run_pipeline(&cfg, &dir, None)?;
    let src = dir.join("sweep.csv");
    let dst = g.place(&a.out);
    if src != dst {
        std::fs::copy(&src, &dst).map_err(|e| CliError::io(&dst, e))?;
    }
    Ok(())
}

fn oracle(a: &OracleCheckCmd, g: &Globals) -> CliResult<()> {
    check_flag(a.c > 0.0 && a.c <= 1.0, "--c must be in (0, 1]")?;
    let scenario = match a.scenario.parse::<ScenarioId>() {
        Ok(id) => OracleScenario::builtin(id),
        Err(_) if Path::new(&a.scenario).is_file() => OracleScenario::load(Path::new(&a.scenario))?,
        Err(e) => return Err(CliError::config(e.to_string())),
    };
    let data = scenario.materialize(g.seed)?;
    let cfg = CheckConfig {
        monte_carlo_samples: a.mc_samples,
        seed: derive_seed(g.seed, "oracle-check", 0),
        ..Default::default()
    };
    let report = oracle_check(&data, a.c, &cfg)?;
    write_json(&g.place(&a.out), &report)?;
    for inv in &report.invariants {
        println!(
            "{} {}: {}",
            if inv.passed { "PASS" } else { "FAIL" },
            inv.name,
            inv.detail
        );
    }
    Ok(())
}

fn pipeline(a: &PipelineCmd, g: &Globals) -> CliResult<()> {
    let (cfg, dir) = load_experiment(&a.config, g)?;
    let manifest = run_pipeline(&cfg, &dir, None)?;
    for s in &manifest.stages {
        println!("{:<13} {:>8.2}s  {}", s.name, s.wall_clock_seconds, &s.key[..12]);
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

impl Globals {
    fn seed_override(&self) -> Option<u64> {
        self.explicit_seed
    }
}

/// Run a parsed command line.
pub fn dispatch(cli: &Cli) -> CliResult<()> {
    if cli.workers == 0 {
        return Err(CliError::config("--workers must be at least 1"));
    }
    // a pool may already exist when called repeatedly in one process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global();
    let g = Globals {
        seed: cli.seed.unwrap_or(0),
        explicit_seed: cli.seed,
        out_dir: cli.out_dir.clone(),
    };
    if let Some(d) = &g.out_dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    match &cli.command {
        Command::TrainGen(a) => train_gen(a, &g),
        Command::TrainDisc(a) => train_disc(a, &g),
        Command::EstimateUc(a) => estimate(a, &g),
        Command::Sample(a) => sample(a, &g),
        Command::Evaluate(a) => evaluate(a, &g),
        Command::Sweep(a) => sweep(a, &g),
        Command::OracleCheck(a) => oracle(a, &g),
        Command::Pipeline(a) => pipeline(a, &g),
    }
}

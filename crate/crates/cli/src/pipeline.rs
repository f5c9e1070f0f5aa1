//! End-to-end experiment: data, generator, discriminator, boundary search,
//! filtered sampling, oracle check and sweep, each stage cached on disk.

use std::path::{Path, PathBuf};
use std::time::Instant;

use filtergen::data::{Corpus, Split, Vocab};
use filtergen::disc::{train_discriminator, Memo, TextCnn};
use filtergen::filter::{estimate_uc, sample_streams, FilteredGenerator, UcEstimate};
use filtergen::genmodel::{
    perplexity, train_mle, GenModel, GenTrainReport, LanguageModel, SamplerConfig, SequenceSampler, Tempered,
};
use filtergen::metrics::{
    temperature_sweep, BleuConfig, EmbeddingKind, EmbeddingModel, Metric, SweepConfig, SweepInputs,
};
use filtergen::oracle::{enumerate_distribution, enumerate_source, oracle_check, CheckConfig, ScenarioData};
use filtergen::rng::{derive_seed, derived};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{file_digest, sha256_hex, OutputRecord, RunManifest, StageRecord};

pub const STAGES: [&str; 7] = [
    "data",
    "train-gen",
    "train-disc",
    "estimate-uc",
    "sample",
    "oracle-check",
    "sweep",
];

type CoreResult<T> = filtergen::Result<T>;

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CoreResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CoreResult<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// File stem used for a given acceptance ratio, e.g. `c0.5`.
pub fn c_label(c: f64) -> String {
    format!("c{c}")
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    hash: String,
    previous: Option<RunManifest>,
    manifest: RunManifest,
}

impl Run<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn stage_key(&self, name: &str) -> String {
        let mut text = format!("{}\n{name}\n", self.hash);
        for s in &self.manifest.stages {
            for o in &s.outputs {
                text.push_str(&format!("{} {}\n", o.path, o.sha256));
            }
        }
        sha256_hex(text.as_bytes())
    }

    fn cached(&self, name: &str, key: &str) -> Option<StageRecord> {
        let rec = self.previous.as_ref()?.stage(name)?;
        if rec.key != key {
            return None;
        }
        let intact = rec
            .outputs
            .iter()
            .all(|o| file_digest(&self.path(&o.path)).ok().as_deref() == Some(o.sha256.as_str()));
        intact.then(|| rec.clone())
    }

    /// Run `compute` unless a previous run left identical outputs for the
    /// same key. `compute` returns the paths it wrote, relative to the run
    /// directory.
    fn stage<F>(&mut self, name: &str, compute: F) -> CliResult<()>
    where
        F: FnOnce(&Self) -> CoreResult<Vec<String>>,
    {
        let key = self.stage_key(name);
        if let Some(rec) = self.cached(name, &key) {
            self.manifest.stages.push(rec);
            return self.manifest.save(&self.dir);
        }
        let start = Instant::now();
        match compute(self) {
            Ok(paths) => {
                let outputs = paths
                    .into_iter()
                    .map(|p| {
                        let sha256 = file_digest(&self.path(&p))?;
                        Ok(OutputRecord { path: p, sha256 })
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                self.manifest.stages.push(StageRecord {
                    name: name.into(),
                    key,
                    outputs,
                    wall_clock_seconds: start.elapsed().as_secs_f64(),
                });
                self.manifest.save(&self.dir)
            }
            Err(source) => {
                self.manifest.failed_stage = Some(name.into());
                self.manifest.save(&self.dir)?;
                Err(CliError::Stage {
                    stage: name.into(),
                    source,
                })
            }
        }
    }

    fn vocab(&self) -> CoreResult<Vocab> {
        read_json(&self.path("vocab.json"))
    }

    fn max_len(&self) -> usize {
        match &self.cfg.data {
            DataSource::Scenario(s) => s.source.length(),
            DataSource::Files { max_len, .. } => *max_len,
        }
    }

    fn corpus(&self, vocab: &Vocab, name: &str, split: Split) -> CoreResult<Corpus> {
        Corpus::read(&self.path(name), vocab, self.max_len(), split)
    }

    fn generator(&self) -> CoreResult<GenModel> {
        GenModel::load(&self.path("generator.json"))
    }

    fn discriminator(&self) -> CoreResult<TextCnn> {
        TextCnn::load(&self.path("discriminator.json"))
    }

    fn sampler_config(&self, temperature: f64) -> CoreResult<SamplerConfig> {
        SamplerConfig::new(temperature, self.max_len())
    }
}

fn data_stage(run: &Run<'_>) -> CoreResult<Vec<String>> {
    let cfg = run.cfg;
    std::fs::create_dir_all(&run.dir)?;
    let (vocab, train, valid, test) = match &cfg.data {
        DataSource::Scenario(s) => {
            let d = s.materialize(cfg.seed)?;
            write_json(&run.path("scenario.json"), s)?;
            (d.vocab, d.train, d.valid, d.test)
        }
        DataSource::Files {
            train,
            valid,
            test,
            vocab_size,
            max_len,
        } => {
            let lines = Corpus::read_lines(train)?;
            let vocab = Vocab::build(&lines, *vocab_size)?;
            let read = |p: &Path, split| Corpus::read(p, &vocab, *max_len, split);
            let tr = Corpus::from_lines(&lines, &vocab, *max_len, Split::Train)?;
            let va = read(valid, Split::Valid)?;
            let te = read(test, Split::Test)?;
            (vocab, tr, va, te)
        }
    };
    write_json(&run.path("vocab.json"), &vocab)?;
    train.write(&run.path("train.txt"), &vocab)?;
    valid.write(&run.path("valid.txt"), &vocab)?;
    test.write(&run.path("test.txt"), &vocab)?;
    let mut out: Vec<String> = ["vocab.json", "train.txt", "valid.txt", "test.txt"]
        .map(String::from)
        .to_vec();
    if cfg.scenario().is_some() {
        out.push("scenario.json".into());
    }
    Ok(out)
}

fn gen_stage(run: &Run<'_>) -> CoreResult<Vec<String>> {
    let cfg = run.cfg;
    let vocab = run.vocab()?;
    let train = run.corpus(&vocab, "train.txt", Split::Train)?;
    let valid = run.corpus(&vocab, "valid.txt", Split::Valid)?;
    let (model, report) = match (&cfg.generator, &cfg.data) {
        (Some(gc), _) => train_mle(&vocab, &train, &valid, gc, derive_seed(cfg.seed, "train-gen", 0))?,
        (None, DataSource::Scenario(s)) => {
            let model = s.materialize(cfg.seed)?.generator;
            let report = GenTrainReport {
                train_perplexity: perplexity(&model, &train),
                valid_perplexity: perplexity(&model, &valid),
                ..Default::default()
            };
            (model, report)
        }
        (None, DataSource::Files { .. }) => {
            return Err(filtergen::Error::Input("no generator configured".into()))
        }
    };
    model.save(&run.path("generator.json"))?;
    write_json(&run.path("generator_report.json"), &report)?;
    Ok(vec!["generator.json".into(), "generator_report.json".into()])
}

fn disc_stage(run: &Run<'_>) -> CoreResult<Vec<String>> {
    let vocab = run.vocab()?;
    let train = run.corpus(&vocab, "train.txt", Split::Train)?;
    let valid = run.corpus(&vocab, "valid.txt", Split::Valid)?;
    let gen = run.generator()?;
    let sampler = Tempered::new(&gen, run.sampler_config(1.0)?);
    let (disc, report) = train_discriminator(
        &train,
        Some(&valid),
        &sampler,
        &run.cfg.discriminator,
        None,
        derive_seed(run.cfg.seed, "train-disc", 0),
    )?;
    disc.save(&run.path("discriminator.json"))?;
    write_json(&run.path("discriminator_report.json"), &report)?;
    Ok(vec![
        "discriminator.json".into(),
        "discriminator_report.json".into(),
    ])
}

fn uc_stage(run: &Run<'_>) -> CoreResult<Vec<String>> {
    let gen = run.generator()?;
    let disc = run.discriminator()?;
    let scorer = Memo::new(&disc);
    let sampler = Tempered::new(&gen, run.sampler_config(1.0)?);
    let estimates = run
        .cfg
        .filter
        .c
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            estimate_uc(
                &sampler,
                &scorer,
                c,
                &run.cfg.filter.search,
                &mut derived(run.cfg.seed, "estimate-uc", i as u64),
            )
        })
        .collect::<CoreResult<Vec<_>>>()?;
    write_json(&run.path("uc.json"), &estimates)?;
    Ok(vec!["uc.json".into()])
}

fn sample_stage(run: &Run<'_>) -> CoreResult<Vec<String>> {
    let cfg = run.cfg;
    let vocab = run.vocab()?;
    let gen = run.generator()?;
    let disc = run.discriminator()?;
    let scorer = Memo::new(&disc);
    let sampler = Tempered::new(&gen, run.sampler_config(1.0)?);
    let n = cfg.filter.samples;
    let mut out = vec!["samples/baseline.txt".to_string()];
    std::fs::create_dir_all(run.path("samples"))?;
    let baseline = sampler.draw_corpus(n, &mut derived(cfg.seed, "sample-baseline", 0))?;
    baseline.write(&run.path(&out[0]), &vocab)?;
    let estimates: Vec<UcEstimate> = read_json(&run.path("uc.json"))?;
    for (i, est) in estimates.iter().enumerate() {
        let label = c_label(est.c);
        let fg = FilteredGenerator::new(&sampler, &scorer, est.params());
        let n_rejected = if est.c < 1.0 { n } else { 0 };
        let res = sample_streams(&fg, n, n_rejected, &mut derived(cfg.seed, "sample", i as u64))?;
        let acc = format!("samples/{label}.accepted.txt");
        res.accepted.write(&run.path(&acc), &vocab)?;
        out.push(acc);
        if !res.rejected.is_empty() {
            let rej = format!("samples/{label}.rejected.txt");
            Corpus::new(res.rejected, Split::Samples)?.write(&run.path(&rej), &vocab)?;
            out.push(rej);
        }
        let stats = format!("samples/{label}.stats.json");
        write_json(&run.path(&stats), &res.stats.summary(est.c))?;
        out.push(stats);
    }
    Ok(out)
}

fn oracle_stage(run: &Run<'_>) -> CoreResult<Vec<String>> {
    let cfg = run.cfg;
    let Some(scenario) = cfg.scenario() else {
        return Ok(Vec::new());
    };
    let vocab = run.vocab()?;
    let generator = run.generator()?;
    let p_theta = enumerate_distribution(&generator)?;
    let data = ScenarioData {
        real: filtergen::genmodel::MarkovModel::new(scenario.source.clone()),
        p_r: enumerate_source(&scenario.source)?,
        p_theta,
        train: run.corpus(&vocab, "train.txt", Split::Train)?,
        valid: run.corpus(&vocab, "valid.txt", Split::Valid)?,
        test: run.corpus(&vocab, "test.txt", Split::Test)?,
        generator,
        vocab,
    };
    let check = CheckConfig {
        uc: cfg.filter.search.clone(),
        monte_carlo_samples: cfg.oracle.monte_carlo_samples,
        seed: derive_seed(cfg.seed, "oracle-check", 0),
    };
    let reports = cfg
        .filter
        .c
        .iter()
        .map(|&c| oracle_check(&data, c, &check))
        .collect::<CoreResult<Vec<_>>>()?;
    write_json(&run.path("oracle_report.json"), &reports)?;
    Ok(vec!["oracle_report.json".into()])
}

fn sweep_stage(run: &Run<'_>) -> CoreResult<Vec<String>> {
    let cfg = run.cfg;
    let vocab = run.vocab()?;
    let train = run.corpus(&vocab, "train.txt", Split::Train)?;
    let valid = run.corpus(&vocab, "valid.txt", Split::Valid)?;
    let test = run.corpus(&vocab, "test.txt", Split::Test)?;
    let gen = run.generator()?;
    let disc = run.discriminator()?;
    let scorer = Memo::new(&disc);
    let metrics = cfg.metrics();
    let lm_config = cfg.lm_config();
    let oracle_lm = if metrics.contains(&Metric::Lm) {
        Some(
            train_mle(
                &vocab,
                &train,
                &valid,
                &lm_config,
                derive_seed(cfg.seed, "oracle-lm", 0),
            )?
            .0,
        )
    } else {
        None
    };
    let embedding = if metrics.contains(&Metric::Fed) {
        Some(match cfg.sweep.embedding {
            EmbeddingKind::PpmiSvd => {
                EmbeddingModel::fit_ppmi_svd(&vocab, &train, cfg.sweep.embedding_dim, 2)?
            }
            EmbeddingKind::NeuralLmMean => EmbeddingModel::from_generator(&gen)?,
        })
    } else {
        None
    };
    let inputs = SweepInputs {
        generator: &gen,
        scorer: Some(&scorer),
        oracle_lm: oracle_lm.as_ref(),
        real_train: &train,
        real_test: &test,
        embedding: embedding.as_ref(),
    };
    let sweep = SweepConfig {
        temperatures: cfg.sweep.temperatures.clone(),
        c_values: cfg.filter.c.clone(),
        metrics,
        samples: cfg.sweep.samples,
        max_len: gen.length_mode().max_len().min(run.max_len()),
        bleu: BleuConfig {
            max_order: cfg.sweep.bleu_order,
            ..Default::default()
        },
        references: cfg.sweep.references,
        uc: cfg.filter.search.clone(),
        disc: cfg.discriminator.clone(),
        reverse_lm: lm_config,
        reverse_min_samples: cfg.sweep.reverse_min_samples,
        seed: derive_seed(cfg.seed, "sweep", 0),
    };
    let report = temperature_sweep(&inputs, &sweep)?;
    std::fs::write(run.path("sweep.csv"), report.to_csv())?;
    write_json(&run.path("sweep.json"), &report)?;
    Ok(vec!["sweep.csv".into(), "sweep.json".into()])
}

/// Run every stage (or those up to and including `last`), reusing stages
/// whose key and outputs match the manifest already in `dir`.
pub fn run_pipeline(cfg: &ExperimentConfig, dir: &Path, last: Option<&str>) -> CliResult<RunManifest> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let hash = cfg.hash();
    let previous = RunManifest::load(dir).filter(|m| m.config_hash == hash);
    let mut run = Run {
        cfg,
        dir: dir.to_path_buf(),
        hash: hash.clone(),
        previous,
        manifest: RunManifest::new(hash),
    };
    type StageFn = fn(&Run<'_>) -> CoreResult<Vec<String>>;
    let stages: [(&str, StageFn); 7] = [
        ("data", data_stage),
        ("train-gen", gen_stage),
        ("train-disc", disc_stage),
        ("estimate-uc", uc_stage),
        ("sample", sample_stage),
        ("oracle-check", oracle_stage),
        ("sweep", sweep_stage),
    ];
    for (name, f) in stages {
        if name == "oracle-check" && cfg.scenario().is_none() {
            continue;
        }
        run.stage(name, f)?;
        if last == Some(name) {
            break;
        }
    }
    Ok(run.manifest)
}

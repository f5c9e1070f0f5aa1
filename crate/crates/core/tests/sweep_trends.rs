//! Quality and diversity trends of the sweep on the bundled s2 scenario.

use filtergen::disc::{train_discriminator, DiscConfig, Memo};
use filtergen::genmodel::{SamplerConfig, Tempered};
use filtergen::metrics::{temperature_sweep, Metric, Stream, SweepConfig, SweepInputs, SweepRow};
use filtergen::oracle::{OracleScenario, ScenarioId};

fn dominated(row: &SweepRow, by: &SweepRow) -> bool {
    let (b, s) = (row.bleu.unwrap(), row.self_bleu.unwrap());
    let (bb, sb) = (by.bleu.unwrap(), by.self_bleu.unwrap());
    bb >= b && sb <= s && (bb > b || sb < s)
}

#[test]
fn filtered_stream_is_not_dominated_by_baseline() {
    let data = OracleScenario::builtin(ScenarioId::S2).materialize(4).unwrap();
    let sampler = Tempered::new(&data.generator, SamplerConfig::default());
    let (disc, _) = train_discriminator(
        &data.train,
        Some(&data.valid),
        &sampler,
        &DiscConfig::default(),
        None,
        4,
    )
    .unwrap();
    let scorer = Memo::new(&disc);
    let inputs = SweepInputs {
        generator: &data.generator,
        scorer: Some(&scorer),
        oracle_lm: None,
        real_train: &data.train,
        real_test: &data.test,
        embedding: None,
    };
    let cfg = SweepConfig {
        temperatures: vec![1.0],
        c_values: vec![0.5],
        metrics: vec![Metric::Bleu, Metric::SelfBleu],
        samples: 1000,
        references: 2000,
        max_len: 4,
        seed: 4,
        ..Default::default()
    };
    let report = temperature_sweep(&inputs, &cfg).unwrap();
    let base = report.rows_for(Stream::Baseline).next().unwrap();
    let acc = report.rows_for(Stream::Accepted).next().unwrap();
    let rej = report.rows_for(Stream::Rejected).next().unwrap();
    assert!(!dominated(acc, base), "accepted {acc:?} baseline {base:?}");
    // the rejected stream is the low-quality side
    assert!(rej.bleu.unwrap() < acc.bleu.unwrap());
    let ratio = acc.acceptance.unwrap();
    assert!((ratio - 0.5).abs() < 0.05, "acceptance {ratio}");
}

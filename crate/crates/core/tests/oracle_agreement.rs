//! The sampling code checked against exact enumeration.

use filtergen::filter::{sample_streams, FilterParams, FilteredGenerator};
use filtergen::genmodel::{SamplerConfig, Tempered};
use filtergen::oracle::{
    exact_filtered_distribution, exact_uc, optimal_discriminator, tv_distance, ExactDistribution,
    ExactScores, OracleScenario, ScenarioData, ScenarioId,
};
use filtergen::rng::derived;

fn scenario(id: ScenarioId) -> ScenarioData {
    OracleScenario::builtin(id).materialize(11).unwrap()
}

/// Acceptance written out directly: full acceptance at or above the
/// boundary, `min(1, c d / (1 - d))` below it.
fn acceptance_at(p: &ExactDistribution, d: &ExactScores, c: f64, u: f64) -> f64 {
    p.probs()
        .iter()
        .zip(d.values())
        .map(|(&px, &dx)| {
            if dx >= u {
                px
            } else {
                px * (c * dx / (1.0 - dx)).min(1.0)
            }
        })
        .sum()
}

#[test]
fn boundary_is_left_edge_of_best_plateau() {
    for id in ScenarioId::ALL {
        let data = scenario(id);
        let d = optimal_discriminator(&data.p_r, &data.p_theta).unwrap();
        let mut edges: Vec<f64> = d.values().to_vec();
        edges.push(0.0);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        for c in [0.2, 0.35, 0.5, 0.65, 0.8] {
            // probe each plateau (edges[k], edges[k+1]] just above its left
            // edge; the first one, [0, edges[1]], at 0
            let mut best: Option<(f64, f64)> = None;
            for (k, &left) in edges.iter().enumerate() {
                let probe = if k == 0 {
                    0.0
                } else {
                    f64::from_bits(left.to_bits() + 1)
                };
                if probe > 1.0 {
                    break;
                }
                let gap = (acceptance_at(&data.p_theta, &d, c, probe) - c).abs();
                if best.is_none_or(|(g, _)| gap < g) {
                    best = Some((gap, left));
                }
            }
            let (gap, left) = best.unwrap();
            let got = exact_uc(&data.p_theta, &d, c).unwrap();
            assert!(
                (got.u_c - left).abs() <= 1e-8,
                "{} c={c}: u_c {} vs edge {left}",
                id.name(),
                got.u_c
            );
            assert!(
                ((got.acceptance - c).abs() - gap).abs() <= 1e-9,
                "{} c={c}: got {got:?} gap {gap} left {left}",
                id.name()
            );
        }
    }
}

#[test]
fn filtered_sampler_follows_exact_law() {
    let n = 200_000;
    for id in [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3] {
        let data = scenario(id);
        let d = optimal_discriminator(&data.p_r, &data.p_theta).unwrap();
        for (i, c) in [0.3, 0.6].into_iter().enumerate() {
            let u_c = exact_uc(&data.p_theta, &d, c).unwrap().u_c;
            let (law, c_exact) = exact_filtered_distribution(&data.p_theta, &d, c, u_c).unwrap();
            let sampler = Tempered::new(&data.generator, SamplerConfig::default());
            let fg = FilteredGenerator::new(&sampler, &d, FilterParams::new(c, u_c).unwrap());
            let out = sample_streams(&fg, n, 0, &mut derived(5, id.name(), i as u64)).unwrap();
            let emp = ExactDistribution::empirical_corpus(law.domain().clone(), &out.accepted).unwrap();
            let tv = tv_distance(&emp, &law).unwrap();
            assert!(tv <= 0.01, "{} c={c}: TV {tv}", id.name());
            let ratio = out.stats.acceptance_ratio();
            assert!(
                (ratio - c_exact).abs() <= 0.01,
                "{} c={c}: {ratio} vs {c_exact}",
                id.name()
            );
        }
    }
}

#[test]
fn filtering_with_optimal_discriminator_moves_toward_data() {
    for id in ScenarioId::ALL {
        let data = scenario(id);
        let d = optimal_discriminator(&data.p_r, &data.p_theta).unwrap();
        let before = tv_distance(&data.p_theta, &data.p_r).unwrap();
        for c in [0.2, 0.5, 0.8] {
            let u_c = exact_uc(&data.p_theta, &d, c).unwrap().u_c;
            let (law, _) = exact_filtered_distribution(&data.p_theta, &d, c, u_c).unwrap();
            let after = tv_distance(&law, &data.p_r).unwrap();
            assert!(after <= before + 1e-12, "{} c={c}: {after} > {before}", id.name());
        }
    }
}

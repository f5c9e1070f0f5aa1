use serde::{Deserialize, Serialize};

use super::{accept_score, check_c, FilterParams};
use crate::disc::Scorer;
use crate::error::{input, Result};
use crate::genmodel::SequenceSampler;
use crate::rng::SeedRng;

/// Search settings for the sampling boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UcConfig {
    /// Samples drawn per round.
    pub samples_per_round: usize,
    pub rounds: usize,
    pub step: f64,
    pub initial: f64,
    /// Number of trailing iterates averaged into the returned boundary.
    pub average_last: usize,
}

impl Default for UcConfig {
    fn default() -> Self {
        UcConfig {
            samples_per_round: 1000,
            rounds: 100,
            step: 0.01,
            initial: 0.5,
            average_last: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcRound {
    /// Boundary used during the round.
    pub u_c: f64,
    /// Fraction of the round's samples accepted.
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcEstimate {
    pub c: f64,
    pub u_c: f64,
    pub trace: Vec<UcRound>,
}

impl UcEstimate {
    pub fn params(&self) -> FilterParams {
        FilterParams::new(self.c, self.u_c).expect("estimate stays in range")
    }
}

/// Fixed-step search for the boundary whose acceptance ratio is `c`.
///
/// Each round measures the acceptance ratio of fresh samples under the
/// current boundary, then lowers the boundary by one step if too few were
/// accepted and raises it otherwise, clamped to `[0, 1]`. The iterate never
/// settles (it oscillates around the fixed point), so the mean of the last
/// `average_last` iterates is returned. `c = 1` is the identity filter and
/// returns `u_c = 0` without sampling.
pub fn estimate_uc<G, S>(
    generator: &G,
    scorer: &S,
    c: f64,
    cfg: &UcConfig,
    rng: &mut SeedRng,
) -> Result<UcEstimate>
where
    G: SequenceSampler + ?Sized,
    S: Scorer + ?Sized,
{
    check_c(c)?;
    if cfg.samples_per_round == 0 || cfg.rounds == 0 || cfg.average_last == 0 {
        return input("samples_per_round, rounds and average_last must be positive");
    }
    if cfg.step.is_nan() || cfg.step <= 0.0 || !(0.0..=1.0).contains(&cfg.initial) {
        return input("step must be > 0 and the initial boundary in [0, 1]");
    }
    if c == 1.0 {
        return Ok(UcEstimate {
            c,
            u_c: 0.0,
            trace: Vec::new(),
        });
    }
    let mut u_c = cfg.initial;
    let mut trace = Vec::with_capacity(cfg.rounds);
    let mut iterates = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let params = FilterParams { c, u_c };
        let mut accepted = 0usize;
        for _ in 0..cfg.samples_per_round {
            let x = generator.draw(rng)?;
            if accept_score(scorer.score(&x), &params, rng) {
                accepted += 1;
            }
        }
        let acceptance = accepted as f64 / cfg.samples_per_round as f64;
        trace.push(UcRound { u_c, acceptance });
        u_c = if acceptance < c {
            u_c - cfg.step
        } else {
            u_c + cfg.step
        };
        u_c = u_c.clamp(0.0, 1.0);
        iterates.push(u_c);
    }
    let tail = &iterates[iterates.len().saturating_sub(cfg.average_last)..];
    let u_c = (tail.iter().sum::<f64>() / tail.len() as f64).clamp(0.0, 1.0);
    Ok(UcEstimate { c, u_c, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MarkovSource, Sequence};
    use crate::genmodel::MarkovModel;
    use crate::rng::seeded;

    /// Score grows with the first symbol: 0.1, 0.3, ..., 0.9 over 5 symbols.
    struct Ramp;
    impl Scorer for Ramp {
        fn score(&self, s: &Sequence) -> f64 {
            0.1 + 0.2 * (s.ids()[0] - 4) as f64
        }
    }

    fn base() -> MarkovModel {
        MarkovModel::new(MarkovSource::uniform(5, 2).unwrap())
    }

    #[test]
    fn identity_limit() {
        let est = estimate_uc(&base(), &Ramp, 1.0, &UcConfig::default(), &mut seeded(1)).unwrap();
        assert_eq!(est.u_c, 0.0);
        assert_eq!(est.params(), FilterParams::identity());
    }

    #[test]
    fn rejects_bad_c() {
        let cfg = UcConfig::default();
        assert!(estimate_uc(&base(), &Ramp, 0.0, &cfg, &mut seeded(1)).is_err());
        assert!(estimate_uc(&base(), &Ramp, 1.2, &cfg, &mut seeded(1)).is_err());
    }

    #[test]
    fn smaller_c_gives_larger_boundary() {
        let cfg = UcConfig::default();
        let lo = estimate_uc(&base(), &Ramp, 0.2, &cfg, &mut seeded(2)).unwrap();
        let hi = estimate_uc(&base(), &Ramp, 0.8, &cfg, &mut seeded(3)).unwrap();
        assert!(lo.u_c >= hi.u_c, "{} vs {}", lo.u_c, hi.u_c);
        assert_eq!(lo.trace.len(), 100);
        assert_eq!(lo.trace[0].u_c, 0.5);
    }

    #[test]
    fn trace_steps_follow_acceptance() {
        let cfg = UcConfig {
            rounds: 20,
            ..Default::default()
        };
        let est = estimate_uc(&base(), &Ramp, 0.5, &cfg, &mut seeded(4)).unwrap();
        for w in est.trace.windows(2) {
            let expected = if w[0].acceptance < 0.5 {
                w[0].u_c - 0.01
            } else {
                w[0].u_c + 0.01
            };
            assert!((w[1].u_c - expected.clamp(0.0, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = UcConfig {
            rounds: 10,
            ..Default::default()
        };
        let a = estimate_uc(&base(), &Ramp, 0.3, &cfg, &mut seeded(9)).unwrap();
        let b = estimate_uc(&base(), &Ramp, 0.3, &cfg, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }
}

//! Rejection filter driven by a discriminator score.
//!
//! A sample with score `d` is kept with probability
//!
//! ```text
//! S(d) = 1                        if d >= u_c
//!      = min(1, c * d / (1 - d))  otherwise
//! ```
//!
//! where `c` is the target acceptance ratio and `u_c` the sampling boundary.
//! With the Bayes-optimal score `d = p_r / (p_r + p_g)` the second branch
//! equals `c * p_r / p_g`, so below the boundary the filtered law is exactly
//! the data law.

mod estimate;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use estimate::{estimate_uc, UcConfig, UcEstimate, UcRound};

use crate::data::{Corpus, Sequence, Split, Vocab};
use crate::disc::Scorer;
use crate::error::{input, Error, PartialSample, Result};
use crate::genmodel::SequenceSampler;
use crate::rng::SeedRng;

/// Cap on `d / (1 - d)`.
const MAX_ODDS: f64 = 1e9;

pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    c: f64,
    u_c: f64,
}

impl FilterParams {
    pub fn new(c: f64, u_c: f64) -> Result<Self> {
        check_c(c)?;
        if !(0.0..=1.0).contains(&u_c) {
            return input(format!("sampling boundary {u_c} outside [0, 1]"));
        }
        // c = 1 accepts everything
        let u_c = if c == 1.0 { 0.0 } else { u_c };
        Ok(FilterParams { c, u_c })
    }

    pub fn identity() -> Self {
        FilterParams { c: 1.0, u_c: 0.0 }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn u_c(&self) -> f64 {
        self.u_c
    }

    /// Acceptance probability for score `d` in `[0, 1]`.
    pub fn acceptance(&self, d: f64) -> f64 {
        acceptance_prob(d, self.c, self.u_c)
    }
}

pub fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c <= 1.0) {
        return input(format!("acceptance ratio {c} outside (0, 1]"));
    }
    Ok(())
}

/// Unchecked form of [`filter_prob`]; `d` may be 0 or 1.
pub(crate) fn acceptance_prob(d: f64, c: f64, u_c: f64) -> f64 {
    if d >= u_c {
        return 1.0;
    }
    let odds = if d >= 1.0 {
        MAX_ODDS
    } else {
        (d / (1.0 - d)).min(MAX_ODDS)
    };
    (c * odds).min(1.0)
}

/// Acceptance probability of a sample with discriminator output `d`.
pub fn filter_prob(d: f64, c: f64, u_c: f64) -> Result<f64> {
    if !(d > 0.0 && d < 1.0) {
        return input(format!("discriminator output {d} outside (0, 1)"));
    }
    FilterParams::new(c, u_c)?;
    Ok(acceptance_prob(d, c, u_c))
}

/// Accept/reject a sample whose score is `d`. The uniform draw is only
/// consumed below the boundary, so a filter with `u_c = 0` leaves the random
/// stream untouched.
pub fn accept_score(d: f64, params: &FilterParams, rng: &mut SeedRng) -> bool {
    if d >= params.u_c {
        return true;
    }
    let z: f64 = rng.gen();
    z <= acceptance_prob(d, params.c, params.u_c)
}

pub fn accept<S: Scorer + ?Sized>(
    seq: &Sequence,
    disc: &S,
    params: &FilterParams,
    rng: &mut SeedRng,
) -> bool {
    accept_score(disc.score(seq), params, rng)
}

/// Counters for a filtered sampling run; merging is associative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub attempts: usize,
    pub acceptances: usize,
    pub sum_d_accepted: f64,
    pub sum_d_rejected: f64,
}

impl FilterStats {
    pub fn record(&mut self, d: f64, accepted: bool) {
        self.attempts += 1;
        if accepted {
            self.acceptances += 1;
            self.sum_d_accepted += d;
        } else {
            self.sum_d_rejected += d;
        }
    }

    pub fn merge(&self, other: &FilterStats) -> FilterStats {
        FilterStats {
            attempts: self.attempts + other.attempts,
            acceptances: self.acceptances + other.acceptances,
            sum_d_accepted: self.sum_d_accepted + other.sum_d_accepted,
            sum_d_rejected: self.sum_d_rejected + other.sum_d_rejected,
        }
    }

    /// Empirical acceptance ratio (NaN before any attempt).
    pub fn acceptance_ratio(&self) -> f64 {
        self.acceptances as f64 / self.attempts as f64
    }

    pub fn mean_d_accepted(&self) -> f64 {
        self.sum_d_accepted / self.acceptances as f64
    }

    pub fn mean_d_rejected(&self) -> f64 {
        self.sum_d_rejected / (self.attempts - self.acceptances) as f64
    }

    pub fn summary(&self, target_c: f64) -> FilterSummary {
        let ratio = self.acceptance_ratio();
        FilterSummary {
            attempts: self.attempts,
            acceptances: self.acceptances,
            acceptance_ratio: ratio,
            target_c,
            deviation: (ratio - target_c).abs(),
            mean_d_accepted: finite_or_none(self.mean_d_accepted()),
            mean_d_rejected: finite_or_none(self.mean_d_rejected()),
        }
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// JSON view of [`FilterStats`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub attempts: usize,
    pub acceptances: usize,
    pub acceptance_ratio: f64,
    pub target_c: f64,
    /// `|acceptance_ratio - target_c|`.
    pub deviation: f64,
    pub mean_d_accepted: Option<f64>,
    pub mean_d_rejected: Option<f64>,
}

/// A base generator followed by the rejection filter.
pub struct FilteredGenerator<'a, G: ?Sized, S: ?Sized> {
    pub base: &'a G,
    pub scorer: &'a S,
    pub params: FilterParams,
    /// Attempts allowed per emitted sample.
    pub max_attempts: usize,
}

impl<'a, G, S> FilteredGenerator<'a, G, S>
where
    G: SequenceSampler + ?Sized,
    S: Scorer + ?Sized,
{
    pub fn new(base: &'a G, scorer: &'a S, params: FilterParams) -> Self {
        FilteredGenerator {
            base,
            scorer,
            params,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    /// One proposal: the sample, its score and the decision.
    pub fn propose(&self, rng: &mut SeedRng) -> Result<(Sequence, f64, bool)> {
        let x = self.base.draw(rng)?;
        let d = self.scorer.score(&x);
        let ok = accept_score(d, &self.params, rng);
        Ok((x, d, ok))
    }
}

impl<G, S> SequenceSampler for FilteredGenerator<'_, G, S>
where
    G: SequenceSampler + ?Sized,
    S: Scorer + ?Sized,
{
    fn vocab(&self) -> &Vocab {
        self.base.vocab()
    }

    fn draw(&self, rng: &mut SeedRng) -> Result<Sequence> {
        let mut stats = FilterStats::default();
        for _ in 0..self.max_attempts {
            let (x, d, ok) = self.propose(rng)?;
            stats.record(d, ok);
            if ok {
                return Ok(x);
            }
        }
        Err(Error::Budget(Box::new(PartialSample {
            accepted: None,
            stats,
        })))
    }
}

/// Accepted and rejected streams of one filtered run.
#[derive(Debug, Clone)]
pub struct FilteredSample {
    pub accepted: Corpus,
    /// Rejected proposals, capped at the requested count.
    pub rejected: Vec<Sequence>,
    pub stats: FilterStats,
}

/// Draw until `n` samples are accepted.
pub fn sample_filtered<G, S>(
    fg: &FilteredGenerator<'_, G, S>,
    n: usize,
    rng: &mut SeedRng,
) -> Result<FilteredSample>
where
    G: SequenceSampler + ?Sized,
    S: Scorer + ?Sized,
{
    sample_streams(fg, n, 0, rng)
}

/// Draw until at least `n_accepted` samples are accepted and `n_rejected`
/// rejected, within `max_attempts * max(n_accepted, n_rejected)` proposals.
pub fn sample_streams<G, S>(
    fg: &FilteredGenerator<'_, G, S>,
    n_accepted: usize,
    n_rejected: usize,
    rng: &mut SeedRng,
) -> Result<FilteredSample>
where
    G: SequenceSampler + ?Sized,
    S: Scorer + ?Sized,
{
    if n_accepted == 0 {
        return input("must request at least one accepted sample");
    }
    let budget = fg.max_attempts.saturating_mul(n_accepted.max(n_rejected));
    let mut accepted = Vec::with_capacity(n_accepted);
    let mut rejected = Vec::with_capacity(n_rejected);
    let mut stats = FilterStats::default();
    while accepted.len() < n_accepted || rejected.len() < n_rejected {
        if stats.attempts >= budget {
            return Err(Error::Budget(Box::new(PartialSample {
                accepted: Corpus::new(accepted, Split::Samples).ok(),
                stats,
            })));
        }
        let (x, d, ok) = fg.propose(rng)?;
        stats.record(d, ok);
        if ok {
            if accepted.len() < n_accepted {
                accepted.push(x);
            }
        } else if rejected.len() < n_rejected {
            rejected.push(x);
        }
    }
    Ok(FilteredSample {
        accepted: Corpus::new(accepted, Split::Samples)?,
        rejected,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MarkovSource;
    use crate::genmodel::{MarkovModel, SequenceSampler};
    use crate::rng::seeded;

    #[test]
    fn piecewise_values() {
        assert!((filter_prob(0.2, 0.5, 0.6).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(filter_prob(0.7, 0.5, 0.6).unwrap(), 1.0);
        // c * d / (1 - d) = 7.2 clamps to 1
        assert_eq!(filter_prob(0.9, 0.8, 0.95).unwrap(), 1.0);
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        assert!(filter_prob(0.0, 0.5, 0.5).is_err());
        assert!(filter_prob(1.0, 0.5, 0.5).is_err());
        assert!(filter_prob(0.5, 0.0, 0.5).is_err());
        assert!(filter_prob(0.5, 1.5, 0.5).is_err());
        assert!(filter_prob(0.5, 0.5, 1.5).is_err());
        assert!(FilterParams::new(0.5, -0.1).is_err());
    }

    #[test]
    fn range_and_monotone_in_d() {
        for &c in &[0.1, 0.4, 0.9, 1.0] {
            for &u in &[0.0, 0.3, 0.77, 1.0] {
                let mut prev = 0.0;
                for i in 1..1000 {
                    let s = filter_prob(i as f64 / 1000.0, c, u).unwrap();
                    assert!((0.0..=1.0).contains(&s));
                    assert!(s >= prev);
                    prev = s;
                }
            }
        }
    }

    #[test]
    fn boundary_zero_always_accepts() {
        let mut rng = seeded(1);
        let p = FilterParams::new(0.3, 0.0).unwrap();
        assert!((0..1000).all(|_| accept_score(1e-9, &p, &mut rng)));
        assert_eq!(FilterParams::new(1.0, 0.7).unwrap().u_c(), 0.0);
    }

    #[test]
    fn zero_probability_never_accepts() {
        let mut rng = seeded(2);
        let p = FilterParams::new(0.3, 0.5).unwrap();
        assert!((0..1000).all(|_| !accept_score(0.0, &p, &mut rng)));
    }

    #[test]
    fn acceptance_frequency_matches_closed_form() {
        let mut rng = seeded(3);
        let p = FilterParams::new(0.5, 0.6).unwrap();
        for &d in &[0.1, 0.3, 0.45] {
            let n = 100_000;
            let hits = (0..n).filter(|_| accept_score(d, &p, &mut rng)).count();
            let expected = filter_prob(d, 0.5, 0.6).unwrap();
            assert!((hits as f64 / n as f64 - expected).abs() <= 0.01);
        }
    }

    struct FirstToken;
    impl Scorer for FirstToken {
        fn score(&self, s: &Sequence) -> f64 {
            0.2 + 0.2 * (s.ids()[0] - 4) as f64
        }
    }

    fn base() -> MarkovModel {
        MarkovModel::new(MarkovSource::uniform(3, 3).unwrap())
    }

    #[test]
    fn identity_filter_reproduces_base_stream() {
        let g = base();
        let fg = FilteredGenerator::new(&g, &FirstToken, FilterParams::identity());
        let out = sample_filtered(&fg, 200, &mut seeded(4)).unwrap();
        let plain = g.draw_corpus(200, &mut seeded(4)).unwrap();
        assert_eq!(out.accepted.sequences(), plain.sequences());
        assert_eq!(out.stats.acceptance_ratio(), 1.0);
    }

    #[test]
    fn accepted_scores_exceed_rejected_scores() {
        let g = base();
        let fg = FilteredGenerator::new(&g, &FirstToken, FilterParams::new(0.4, 0.55).unwrap());
        let out = sample_streams(&fg, 2000, 500, &mut seeded(5)).unwrap();
        assert!(out.stats.mean_d_accepted() > out.stats.mean_d_rejected());
        assert_eq!(out.accepted.len(), 2000);
        assert_eq!(out.rejected.len(), 500);
        let s = out.stats.summary(0.4);
        assert!(
            (s.acceptance_ratio - out.stats.acceptances as f64 / out.stats.attempts as f64).abs() < 1e-15
        );
    }

    #[test]
    fn budget_exhaustion_carries_partial_results() {
        struct Zero;
        impl Scorer for Zero {
            fn score(&self, _: &Sequence) -> f64 {
                0.0
            }
        }
        let g = base();
        let mut fg = FilteredGenerator::new(&g, &Zero, FilterParams::new(0.5, 0.5).unwrap());
        fg.max_attempts = 10;
        match sample_filtered(&fg, 3, &mut seeded(6)) {
            Err(Error::Budget(partial)) => {
                assert_eq!(partial.stats.attempts, 30);
                assert!(partial.accepted.is_none());
            }
            other => panic!("expected budget error, got {other:?}"),
        }
        assert!(matches!(fg.draw(&mut seeded(7)), Err(Error::Budget(_))));
    }

    #[test]
    fn stats_merge_is_associative() {
        let mut a = FilterStats::default();
        let mut b = FilterStats::default();
        let mut c = FilterStats::default();
        a.record(0.3, true);
        b.record(0.1, false);
        b.record(0.9, true);
        c.record(0.2, false);
        assert_eq!(a.merge(&b).merge(&c), a.merge(&b.merge(&c)));
    }
}

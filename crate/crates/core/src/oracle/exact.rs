use std::collections::HashMap;
use std::sync::Arc;

use crate::data::{Corpus, MarkovSource, Sequence, NUM_RESERVED};
use crate::disc::Scorer;
use crate::error::{input, Error, Result};
use crate::filter::{acceptance_prob, check_c};
use crate::genmodel::{seq_logprob, LanguageModel, LengthMode};
use crate::math::pairwise_sum;

/// Largest domain we are willing to enumerate.
pub const MAX_DOMAIN: usize = 1_000_000;

/// Every length-`length` sequence over `symbols` corpus tokens, in
/// lexicographic order.
#[derive(Debug, PartialEq)]
pub struct Domain {
    symbols: usize,
    length: usize,
    seqs: Vec<Sequence>,
    index: HashMap<Sequence, usize>,
}

impl Domain {
    pub fn new(symbols: usize, length: usize) -> Result<Arc<Self>> {
        if symbols == 0 || length == 0 {
            return input("domain needs at least one symbol and length >= 1");
        }
        let size = (symbols as f64).powi(length as i32);
        if size > MAX_DOMAIN as f64 {
            return input(format!(
                "domain of {symbols}^{length} sequences is too large to enumerate"
            ));
        }
        let size = size as usize;
        let mut seqs = Vec::with_capacity(size);
        for code in 0..size {
            let mut ids = vec![0u32; length];
            let mut rest = code;
            for t in (0..length).rev() {
                ids[t] = (NUM_RESERVED + rest % symbols) as u32;
                rest /= symbols;
            }
            seqs.push(Sequence::new(ids).expect("length >= 1"));
        }
        let index = seqs.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(Arc::new(Domain {
            symbols,
            length,
            seqs,
            index,
        }))
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.seqs
    }

    pub fn position(&self, seq: &Sequence) -> Option<usize> {
        self.index.get(seq).copied()
    }

    fn same(a: &Arc<Domain>, b: &Arc<Domain>) -> bool {
        Arc::ptr_eq(a, b) || (a.symbols == b.symbols && a.length == b.length)
    }
}

/// Explicit probability for every sequence of a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    domain: Arc<Domain>,
    probs: Vec<f64>,
}

impl ExactDistribution {
    pub fn new(domain: Arc<Domain>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != domain.len() {
            return input("probability vector does not match the domain");
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return input("probabilities must be finite and non-negative");
        }
        Ok(ExactDistribution { domain, probs })
    }

    /// Relative frequencies of `samples`; every sample must lie in the domain.
    pub fn empirical(domain: Arc<Domain>, samples: &[Sequence]) -> Result<Self> {
        if samples.is_empty() {
            return input("no samples");
        }
        let mut counts = vec![0.0; domain.len()];
        for s in samples {
            let i = domain
                .position(s)
                .ok_or_else(|| Error::Input(format!("sample {s} lies outside the domain")))?;
            counts[i] += 1.0;
        }
        let n = samples.len() as f64;
        ExactDistribution::new(domain, counts.into_iter().map(|c| c / n).collect())
    }

    pub fn empirical_corpus(domain: Arc<Domain>, corpus: &Corpus) -> Result<Self> {
        ExactDistribution::empirical(domain, corpus.sequences())
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, seq: &Sequence) -> f64 {
        self.domain.position(seq).map_or(0.0, |i| self.probs[i])
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.probs)
    }

    fn check_same(&self, other: &ExactDistribution) -> Result<()> {
        if !Domain::same(&self.domain, &other.domain) {
            return input("distributions live on different domains");
        }
        Ok(())
    }
}

/// Enumerate `model` over its fixed-length domain.
pub fn enumerate_distribution<M: LanguageModel + ?Sized>(model: &M) -> Result<ExactDistribution> {
    let LengthMode::Fixed { length } = model.length_mode() else {
        return input("only fixed-length models can be enumerated");
    };
    let symbols = model.vocab().len() - NUM_RESERVED;
    let domain = Domain::new(symbols, length)?;
    let probs = domain
        .sequences()
        .iter()
        .map(|s| seq_logprob(model, s).exp())
        .collect();
    ExactDistribution::new(domain, probs)
}

/// Enumerate a Markov source by its closed-form sequence probability.
pub fn enumerate_source(source: &MarkovSource) -> Result<ExactDistribution> {
    let domain = Domain::new(source.states(), source.length())?;
    let probs = domain.sequences().iter().map(|s| source.exact_prob(s)).collect();
    ExactDistribution::new(domain, probs)
}

/// Exact scores over a domain, usable as a discriminator. Sequences outside
/// the domain score 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactScores {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl ExactScores {
    pub fn new(domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return input("scores must cover the domain and lie in [0, 1]");
        }
        Ok(ExactScores { domain, values })
    }

    /// Tabulate any scorer over `domain`.
    pub fn tabulate<S: Scorer + ?Sized>(domain: Arc<Domain>, scorer: &S) -> Result<Self> {
        let values = domain.sequences().iter().map(|s| scorer.score(s)).collect();
        ExactScores::new(domain, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }
}

impl Scorer for ExactScores {
    fn score(&self, seq: &Sequence) -> f64 {
        self.domain.position(seq).map_or(0.5, |i| self.values[i])
    }
}

/// `D*(x) = p_r(x) / (p_r(x) + p_g(x))`, with 0.5 where both vanish.
pub fn optimal_discriminator(p_r: &ExactDistribution, p_theta: &ExactDistribution) -> Result<ExactScores> {
    p_r.check_same(p_theta)?;
    let values = p_r
        .probs
        .iter()
        .zip(&p_theta.probs)
        .map(|(&r, &g)| if r + g > 0.0 { r / (r + g) } else { 0.5 })
        .collect();
    ExactScores::new(p_r.domain.clone(), values)
}

fn check_scores(p_theta: &ExactDistribution, d: &ExactScores) -> Result<()> {
    if !Domain::same(&p_theta.domain, &d.domain) {
        return input("scores and distribution live on different domains");
    }
    Ok(())
}

/// `sum_x S(x) p_theta(x)`.
pub fn exact_acceptance(p_theta: &ExactDistribution, d: &ExactScores, c: f64, u_c: f64) -> Result<f64> {
    check_scores(p_theta, d)?;
    Ok(acceptance_sum(p_theta, d, c, u_c))
}

fn acceptance_sum(p_theta: &ExactDistribution, d: &ExactScores, c: f64, u_c: f64) -> f64 {
    let terms: Vec<f64> = p_theta
        .probs
        .iter()
        .zip(&d.values)
        .map(|(&p, &dx)| acceptance_prob(dx, c, u_c) * p)
        .collect();
    pairwise_sum(&terms)
}

/// Law of the filtered generator, `S(x) p_theta(x) / c_exact`, and the exact
/// acceptance ratio `c_exact`.
pub fn exact_filtered_distribution(
    p_theta: &ExactDistribution,
    d: &ExactScores,
    c: f64,
    u_c: f64,
) -> Result<(ExactDistribution, f64)> {
    check_scores(p_theta, d)?;
    check_c(c)?;
    let weighted: Vec<f64> = p_theta
        .probs
        .iter()
        .zip(&d.values)
        .map(|(&p, &dx)| acceptance_prob(dx, c, u_c) * p)
        .collect();
    let c_exact = pairwise_sum(&weighted);
    if c_exact.is_nan() || c_exact <= 0.0 {
        return Err(Error::Degenerate("the filter accepts nothing".into()));
    }
    let probs = weighted.into_iter().map(|w| w / c_exact).collect();
    Ok((ExactDistribution::new(p_theta.domain.clone(), probs)?, c_exact))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExactUc {
    pub c: f64,
    pub u_c: f64,
    /// Exact acceptance ratio at `u_c`.
    pub acceptance: f64,
    /// Lowest acceptance reachable (at `u_c = 1`).
    pub min_acceptance: f64,
    /// Highest acceptance reachable (at `u_c = 0`).
    pub max_acceptance: f64,
    /// False when `c` lies below `min_acceptance`.
    pub achievable: bool,
}

const GRID: usize = 10_000;

/// Smallest boundary whose exact acceptance is as close to `c` as any.
///
/// Acceptance is piecewise constant and non-increasing in `u_c`, so a grid
/// search at resolution 1e-4 finds the best plateau and bisection then
/// locates its left edge.
pub fn exact_uc(p_theta: &ExactDistribution, d: &ExactScores, c: f64) -> Result<ExactUc> {
    check_scores(p_theta, d)?;
    check_c(c)?;
    let acc = |u: f64| acceptance_sum(p_theta, d, c, u);
    let min_acceptance = acc(1.0);
    let max_acceptance = acc(0.0);
    let achievable = min_acceptance <= c + 1e-12;
    if c == 1.0 {
        return Ok(ExactUc {
            c,
            u_c: 0.0,
            acceptance: max_acceptance,
            min_acceptance,
            max_acceptance,
            achievable,
        });
    }
    let mut best = (0usize, f64::INFINITY);
    for k in 0..=GRID {
        let gap = (acc(k as f64 / GRID as f64) - c).abs();
        if gap < best.1 {
            best = (k, gap);
        }
    }
    let mut hi = best.0 as f64 / GRID as f64;
    if best.0 > 0 {
        let mut lo = (best.0 - 1) as f64 / GRID as f64;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (acc(mid) - c).abs() <= best.1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok(ExactUc {
        c,
        u_c: hi,
        acceptance: acc(hi),
        min_acceptance,
        max_acceptance,
        achievable,
    })
}

/// `0.5 * sum |p - q|`.
pub fn tv_distance(p: &ExactDistribution, q: &ExactDistribution) -> Result<f64> {
    p.check_same(q)?;
    let diffs: Vec<f64> = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).collect();
    Ok(0.5 * pairwise_sum(&diffs))
}

/// `KL(p || q)` in nats; infinite when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &ExactDistribution, q: &ExactDistribution) -> Result<f64> {
    p.check_same(q)?;
    let terms: Vec<f64> = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| match (a > 0.0, b > 0.0) {
            (false, _) => 0.0,
            (true, false) => f64::INFINITY,
            (true, true) => a * (a / b).ln(),
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Jensen-Shannon divergence in nats (bounded by ln 2).
pub fn js_divergence(p: &ExactDistribution, q: &ExactDistribution) -> Result<f64> {
    p.check_same(q)?;
    let m: Vec<f64> = p.probs.iter().zip(&q.probs).map(|(a, b)| 0.5 * (a + b)).collect();
    let m = ExactDistribution::new(p.domain.clone(), m)?;
    Ok(0.5 * kl_divergence(p, &m)? + 0.5 * kl_divergence(q, &m)?)
}

//! Brute-force ground truth on small enumerable domains.

mod check;
mod exact;
pub mod scenario;

pub use check::{
    oracle_check, CheckConfig, InvariantCheck, OracleReport, ALGORITHM_TOLERANCE, MONTE_CARLO_TOLERANCE,
};
pub use exact::{
    enumerate_distribution, enumerate_source, exact_acceptance, exact_filtered_distribution, exact_uc,
    js_divergence, kl_divergence, optimal_discriminator, tv_distance, Domain, ExactDistribution, ExactScores,
    ExactUc, MAX_DOMAIN,
};
pub use scenario::{GeneratorSpec, OracleScenario, ScenarioData, ScenarioId};

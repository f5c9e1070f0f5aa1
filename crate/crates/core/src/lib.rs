//! Discriminator-guided rejection sampling for autoregressive sequence
//! generators.
//!
//! A base generator is trained by maximum likelihood, a binary classifier
//! learns to tell its samples from real data, and a rejection filter driven
//! by the classifier score reshapes the generator's output law towards the
//! data distribution. On small enumerable domains the [`oracle`] module
//! computes every quantity exactly, which is what the tests check against.

pub mod checkpoint;
pub mod data;
pub mod disc;
pub mod error;
pub mod filter;
pub mod genmodel;
pub mod math;
pub mod metrics;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use rng::SeedRng;

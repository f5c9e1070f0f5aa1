use crate::data::Corpus;
use crate::filter::FilterStats;

/// Accepted samples and statistics gathered before a sampling budget ran out.
#[derive(Debug, Clone)]
pub struct PartialSample {
    pub accepted: Option<Corpus>,
    pub stats: FilterStats,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("attempt budget exhausted after {} attempts ({} accepted)", .0.stats.attempts, .0.stats.acceptances)]
    Budget(Box<PartialSample>),
    #[error("degenerate result: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

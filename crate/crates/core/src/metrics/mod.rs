//! Quality and diversity metrics for generated corpora.

mod bleu;
mod difficulty;
mod embed;
mod fed;
mod lmscore;
mod sweep;

pub use bleu::{bleu, self_bleu, BleuConfig};
pub use difficulty::{error_rate_by_length, LabelledSplits, LengthBucket};
pub use embed::{embed, EmbeddingKind, EmbeddingModel};
pub use fed::fed;
pub use lmscore::{lm_score, reverse_lm_score, DEFAULT_MIN_REVERSE_SAMPLES};
pub use sweep::{
    error_rate_fresh, temperature_sweep, Metric, Stream, SweepConfig, SweepInputs, SweepReport, SweepRow,
    CSV_HEADER,
};

//! Real-versus-generated sequence classifier.

mod textcnn;
mod train;

pub use textcnn::{DiscConfig, TextCnn};
pub use train::{error_rate, train_discriminator, train_on_corpora, DiscTrainReport, EpochStats};

use crate::data::Sequence;

/// Something that scores how likely a sequence is to be real, in `[0, 1]`.
pub trait Scorer {
    fn score(&self, seq: &Sequence) -> f64;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, seq: &Sequence) -> f64 {
        (**self).score(seq)
    }
}

impl Scorer for TextCnn {
    fn score(&self, seq: &Sequence) -> f64 {
        self.predict(seq)
    }
}

/// Memoises another scorer. Useful on small domains where the same
/// sequences are scored millions of times.
pub struct Memo<S> {
    inner: S,
    cache: std::sync::Mutex<std::collections::HashMap<Sequence, f64>>,
}

impl<S: Scorer> Memo<S> {
    pub fn new(inner: S) -> Self {
        Memo {
            inner,
            cache: Default::default(),
        }
    }
}

impl<S: Scorer> Scorer for Memo<S> {
    fn score(&self, seq: &Sequence) -> f64 {
        if let Some(&d) = self.cache.lock().expect("poisoned").get(seq) {
            return d;
        }
        let d = self.inner.score(seq);
        self.cache.lock().expect("poisoned").insert(seq.clone(), d);
        d
    }
}

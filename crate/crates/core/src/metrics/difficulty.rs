use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Vocab};
use crate::disc::{error_rate, train_on_corpora, DiscConfig};
use crate::error::{input, Result};
use crate::rng::derive_seed;

/// Real and generated corpora, each split three ways.
#[derive(Debug, Clone)]
pub struct LabelledSplits {
    pub real_train: Corpus,
    pub real_valid: Corpus,
    pub real_test: Corpus,
    pub fake_train: Corpus,
    pub fake_valid: Corpus,
    pub fake_test: Corpus,
}

impl LabelledSplits {
    fn truncated(&self, len: usize) -> Result<LabelledSplits> {
        let cut = |c: &Corpus| Corpus::new(c.iter().map(|s| s.prefix(len)).collect(), c.split());
        Ok(LabelledSplits {
            real_train: cut(&self.real_train)?,
            real_valid: cut(&self.real_valid)?,
            real_test: cut(&self.real_test)?,
            fake_train: cut(&self.fake_train)?,
            fake_valid: cut(&self.fake_valid)?,
            fake_test: cut(&self.fake_test)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub length: usize,
    pub error_rate: f64,
}

/// Test error of a classifier trained from scratch on each length bucket.
///
/// A bucket of length `l` holds the first `l` tokens of every sequence, so
/// all buckets share the same underlying samples.
pub fn error_rate_by_length(
    vocab: &Vocab,
    data: &LabelledSplits,
    lengths: &[usize],
    cfg: &DiscConfig,
    seed: u64,
) -> Result<Vec<LengthBucket>> {
    if lengths.is_empty() || lengths.contains(&0) {
        return input("length buckets must be non-empty and positive");
    }
    lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let d = data.truncated(len)?;
            let (disc, _) = train_on_corpora(
                vocab,
                &d.real_train,
                &d.real_valid,
                &d.fake_train,
                &d.fake_valid,
                cfg,
                None,
                derive_seed(seed, "length-bucket", i as u64),
            )?;
            Ok(LengthBucket {
                length: len,
                error_rate: error_rate(&disc, &d.real_test, &d.fake_test),
            })
        })
        .collect()
}

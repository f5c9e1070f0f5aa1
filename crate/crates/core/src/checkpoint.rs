//! Single-document JSON container shared by every trained model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::error::{input, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    /// `ngram`, `neural`, `markov` or `textcnn`.
    pub kind: String,
    pub vocab: Vocab,
    /// Hyperparameters needed to rebuild the model around `params`.
    #[serde(default)]
    pub config: serde_json::Value,
    pub params: BTreeMap<String, Vec<f64>>,
}

impl Checkpoint {
    pub fn new(kind: &str, vocab: Vocab) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            vocab,
            config: serde_json::Value::Null,
            params: BTreeMap::new(),
        }
    }

    pub fn param(&self, name: &str) -> Result<&[f64]> {
        self.params
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| crate::Error::Input(format!("checkpoint has no parameter {name:?}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.format_version != FORMAT_VERSION {
            return input(format!(
                "unsupported checkpoint format_version {}",
                ck.format_version
            ));
        }
        Ok(ck)
    }
}

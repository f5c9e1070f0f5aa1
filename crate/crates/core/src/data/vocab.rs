use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Sequence;
use crate::error::{input, Result};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;
pub const NUM_RESERVED: usize = 4;
pub const RESERVED: [&str; NUM_RESERVED] = ["<bos>", "<eos>", "<pad>", "<unk>"];

/// Token/id bijection. Ids `0..4` are reserved (BOS, EOS, PAD, UNK); corpus
/// tokens follow in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VocabFile", try_from = "VocabFile")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

/// On-disk form: corpus tokens only, reserved ids implicit.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    tokens: Vec<String>,
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile {
            tokens: v.tokens[NUM_RESERVED..].to_vec(),
        }
    }
}

impl TryFrom<VocabFile> for Vocab {
    type Error = crate::Error;

    fn try_from(f: VocabFile) -> Result<Self> {
        Vocab::from_tokens(f.tokens)
    }
}

impl Vocab {
    /// Vocabulary over the given corpus tokens, in order.
    pub fn from_tokens<I, S>(corpus_tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for tok in corpus_tokens {
            let tok = tok.into();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return input(format!("token {tok:?} is empty or contains whitespace"));
            }
            if index.contains_key(&tok) {
                return input(format!("duplicate or reserved token {tok:?}"));
            }
            index.insert(tok.clone(), tokens.len() as u32);
            tokens.push(tok);
        }
        Ok(Vocab { tokens, index })
    }

    /// Keep the `max_size` most frequent whitespace tokens; ties go to the
    /// token seen first.
    pub fn build<S: AsRef<str>>(lines: &[S], max_size: usize) -> Result<Self> {
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut order = 0usize;
        for line in lines {
            for tok in line.as_ref().split_whitespace() {
                let entry = counts.entry(tok).or_insert_with(|| {
                    order += 1;
                    (0, order)
                });
                entry.0 += 1;
            }
        }
        if counts.is_empty() {
            return input("cannot build a vocabulary from empty input");
        }
        let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(t, (c, o))| (t, c, o)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(max_size);
        // a corpus token spelled like a reserved one is folded into it
        Vocab::from_tokens(
            ranked
                .into_iter()
                .map(|(t, _, _)| t)
                .filter(|t| !RESERVED.contains(t)),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == NUM_RESERVED
    }

    /// Id of `token`, mapping unknown tokens to UNK.
    pub fn id_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of non-reserved tokens.
    pub fn corpus_ids(&self) -> std::ops::Range<u32> {
        NUM_RESERVED as u32..self.tokens.len() as u32
    }

    /// Whitespace-tokenise `line`, truncating at `max_len` ids.
    pub fn encode(&self, line: &str, max_len: usize) -> Result<Sequence> {
        Sequence::new(
            line.split_whitespace()
                .take(max_len)
                .map(|t| self.id_of(t))
                .collect(),
        )
    }

    pub fn decode(&self, seq: &Sequence) -> String {
        seq.ids()
            .iter()
            .map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn contains_id(&self, id: u32) -> bool {
        (id as usize) < self.tokens.len()
    }
}

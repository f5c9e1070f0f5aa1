use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Vocab;
use crate::error::{input, Result};

/// A non-empty list of token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Sequence(Vec<u32>);

impl Sequence {
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return input("sequence must contain at least one token");
        }
        Ok(Sequence(ids))
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// First `len` ids (at least one).
    pub fn prefix(&self, len: usize) -> Sequence {
        Sequence(self.0[..len.clamp(1, self.0.len())].to_vec())
    }
}

impl TryFrom<Vec<u32>> for Sequence {
    type Error = crate::Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        Sequence::new(v)
    }
}

impl From<Sequence> for Vec<u32> {
    fn from(s: Sequence) -> Self {
        s.0
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    /// Output of a generator.
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    sequences: Vec<Sequence>,
    split: Split,
}

impl Corpus {
    pub fn new(sequences: Vec<Sequence>, split: Split) -> Result<Self> {
        if sequences.is_empty() {
            return input(format!("{split:?} corpus is empty"));
        }
        Ok(Corpus { sequences, split })
    }

    /// Parse one sentence per line; blank lines are skipped.
    pub fn from_lines<S: AsRef<str>>(
        lines: &[S],
        vocab: &Vocab,
        max_len: usize,
        split: Split,
    ) -> Result<Self> {
        let seqs = lines
            .iter()
            .map(AsRef::as_ref)
            .filter(|l| !l.trim().is_empty())
            .map(|l| vocab.encode(l, max_len))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(seqs, split)
    }

    pub fn read_lines(path: &Path) -> Result<Vec<String>> {
        let file = std::fs::File::open(path)?;
        Ok(std::io::BufReader::new(file)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?)
    }

    pub fn read(path: &Path, vocab: &Vocab, max_len: usize, split: Split) -> Result<Self> {
        Corpus::from_lines(&Corpus::read_lines(path)?, vocab, max_len, split)
    }

    pub fn write(&self, path: &Path, vocab: &Vocab) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for s in &self.sequences {
            writeln!(out, "{}", vocab.decode(s))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn into_sequences(self) -> Vec<Sequence> {
        self.sequences
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sequence> {
        self.sequences.iter()
    }

    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    /// Every id is valid under `vocab`.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        for s in &self.sequences {
            if let Some(&bad) = s.ids().iter().find(|&&id| !vocab.contains_id(id)) {
                return input(format!(
                    "token id {bad} is outside a vocabulary of {} entries",
                    vocab.len()
                ));
            }
        }
        Ok(())
    }

    /// Split off the last `holdout` sequences. Both parts must be non-empty.
    pub fn split_tail(&self, holdout: usize, head: Split, tail: Split) -> Result<(Corpus, Corpus)> {
        if holdout == 0 || holdout >= self.len() {
            return input(format!("cannot hold out {holdout} of {} sequences", self.len()));
        }
        let cut = self.len() - holdout;
        Ok((
            Corpus::new(self.sequences[..cut].to_vec(), head)?,
            Corpus::new(self.sequences[cut..].to_vec(), tail)?,
        ))
    }

    /// Hold out the last `frac` of the corpus (at least one sequence).
    pub fn split_fraction(&self, frac: f64, head: Split, tail: Split) -> Result<(Corpus, Corpus)> {
        let holdout = ((self.len() as f64 * frac).round() as usize).max(1);
        self.split_tail(holdout, head, tail)
    }

    /// The first `n` sequences.
    pub fn take(&self, n: usize) -> Result<Corpus> {
        Corpus::new(self.sequences[..n.min(self.len())].to_vec(), self.split)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Sequence;
    type IntoIter = std::slice::Iter<'a, Sequence>;
    fn into_iter(self) -> Self::IntoIter {
        self.sequences.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(ids: &[u32]) -> Sequence {
        Sequence::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn empty_corpus_and_sequence_rejected() {
        assert!(Sequence::new(vec![]).is_err());
        assert!(Corpus::new(vec![], Split::Train).is_err());
        assert!(serde_json::from_str::<Sequence>("[]").is_err());
    }

    #[test]
    fn tail_split_is_disjoint_cover() {
        let c = Corpus::new((0..10).map(|i| seq(&[4 + i])).collect(), Split::Train).unwrap();
        let (a, b) = c.split_fraction(0.1, Split::Train, Split::Valid).unwrap();
        assert_eq!(a.len(), 9);
        assert_eq!(b.len(), 1);
        assert_eq!(b.sequences()[0], seq(&[13]));
        let mut joined = a.sequences().to_vec();
        joined.extend_from_slice(b.sequences());
        assert_eq!(joined, c.sequences());
        assert!(c.split_tail(10, Split::Train, Split::Valid).is_err());
    }

    #[test]
    fn vocab_check() {
        let v = Vocab::from_tokens(["a"]).unwrap();
        let ok = Corpus::new(vec![seq(&[4, 3])], Split::Test).unwrap();
        assert!(ok.check_vocab(&v).is_ok());
        let bad = Corpus::new(vec![seq(&[5])], Split::Test).unwrap();
        assert!(bad.check_vocab(&v).is_err());
    }

    proptest! {
        #[test]
        fn vocab_bijection_and_roundtrip(
            lines in proptest::collection::vec(
                proptest::collection::vec("[a-e]{1,3}", 1..8), 1..12)
        ) {
            let text: Vec<String> = lines.iter().map(|l| l.join(" ")).collect();
            let vocab = Vocab::build(&text, 1000).unwrap();
            for (i, t) in vocab.tokens().iter().enumerate() {
                prop_assert_eq!(vocab.id_of(t), i as u32);
            }
            for line in &text {
                let s = vocab.encode(line, 100).unwrap();
                prop_assert_eq!(&vocab.decode(&s), line);
            }
        }
    }
}

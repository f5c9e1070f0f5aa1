//! Corpora, vocabularies and synthetic sources with known probabilities.

mod corpus;
mod markov;
mod vocab;

pub use corpus::{Corpus, Sequence, Split};
pub use markov::MarkovSource;
pub use vocab::{Vocab, BOS, EOS, NUM_RESERVED, PAD, RESERVED, UNK};

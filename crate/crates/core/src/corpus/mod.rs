//! Seed payload preprocessing: tokenization, vocabulary construction with
//! frequent n-gram entries, and generalization of schema identifiers.

pub mod builtin;
mod generalize;
mod tokenizer;
mod vocab;

pub use generalize::{concretize, generalize_identifiers, generalize_text, ReverseMap, Schema};
pub use tokenizer::{default_spacing, is_word, join_pieces, split_pieces, Piece};
pub use vocab::{build_vocab, read_seed_file, parse_seed_lines, Vocab, DEFAULT_NGRAM_THRESHOLD};

use thiserror::Error;

pub const PAD_ID: u32 = 0;
pub const MASK_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
pub const COL_ID: u32 = 3;
pub const TBL_ID: u32 = 4;
/// Number of reserved ids at the start of every vocabulary.
pub const RESERVED: usize = 5;

pub const COL_SURFACE: &str = "<COL>";
pub const TBL_SURFACE: &str = "<TBL>";
pub(crate) const SPECIAL_SURFACES: [&str; RESERVED] = ["[PAD]", "[MASK]", "[UNK]", COL_SURFACE, TBL_SURFACE];

/// Default maximum sequence length, in tokens.
pub const DEFAULT_MAX_TOKENS: usize = 64;
/// Default cap on raw payload size, in bytes.
pub const DEFAULT_MAX_BYTES: usize = 1024;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input is empty")]
    InputTooShort,
    #[error("input is {len} bytes, cap is {cap}")]
    InputTooLong { len: usize, cap: usize },
    #[error("input has {len} tokens, limit is {max}")]
    TooManyTokens { len: usize, max: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocab file: {0}")]
    VocabFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// A vocabulary entry placed in a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub id: u32,
    pub surface: String,
    /// Preceded by whitespace when rendered (ignored for the first token).
    pub spaced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Mutated,
}

/// An ordered, non-empty list of tokens with the spacing needed to render it
/// back to text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<Token>,
    pub origin: Origin,
}

impl TokenSequence {
    pub fn new(tokens: Vec<Token>, origin: Origin) -> Result<Self> {
        if tokens.is_empty() {
            return Err(CorpusError::InputTooShort);
        }
        Ok(Self { tokens, origin })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.id as usize).collect()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }


    /// Renders the sequence as payload text.
    pub fn detokenize(&self) -> String {
        join_pieces(self.tokens.iter().map(|t| (t.surface.as_str(), t.spaced)))
    }
}

impl std::fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.detokenize())
    }
}

/// Free-standing form of [`TokenSequence::detokenize`].
pub fn detokenize(seq: &TokenSequence) -> String {
    seq.detokenize()
}

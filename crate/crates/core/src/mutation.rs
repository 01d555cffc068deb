//! Token-level edit actions and their application.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Origin, Token, TokenSequence, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    Insert,
    Delete,
    Replace,
}

impl MutationOp {
    pub const ALL: [MutationOp; 3] = [MutationOp::Insert, MutationOp::Delete, MutationOp::Replace];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Number of legal positions for a sequence of `len` tokens.
    pub fn slots(self, len: usize) -> usize {
        match self {
            MutationOp::Insert => len + 1,
            _ => len,
        }
    }
}

impl fmt::Display for MutationOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MutationOp::Insert => "insert",
            MutationOp::Delete => "delete",
            MutationOp::Replace => "replace",
        })
    }
}

/// One edit. `token` is ignored for deletions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MutationAction {
    pub op: MutationOp,
    pub position: usize,
    pub token: u32,
}

impl MutationAction {
    pub fn insert(position: usize, token: u32) -> Self {
        Self { op: MutationOp::Insert, position, token }
    }

    pub fn delete(position: usize) -> Self {
        Self { op: MutationOp::Delete, position, token: 0 }
    }

    pub fn replace(position: usize, token: u32) -> Self {
        Self { op: MutationOp::Replace, position, token }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("position {position} out of bounds for {op} on {len} tokens")]
    OutOfBounds { op: MutationOp, position: usize, len: usize },
    #[error("insert would exceed {max} tokens")]
    TooLong { max: usize },
    #[error("cannot delete the only token")]
    WouldBeEmpty,
    #[error("token id {0} is not in the vocabulary")]
    UnknownToken(u32),
}

/// Applies `action` to `seq`. Inserted and replacing tokens get default
/// spacing relative to their left neighbour; other tokens are untouched.
pub fn apply(vocab: &Vocab, seq: &TokenSequence, action: MutationAction, max_len: usize) -> Result<TokenSequence, MutationError> {
    let len = seq.len();
    let MutationAction { op, position, token } = action;
    if position >= op.slots(len) {
        return Err(MutationError::OutOfBounds { op, position, len });
    }
    if op != MutationOp::Delete && token as usize >= vocab.len() {
        return Err(MutationError::UnknownToken(token));
    }
    let mut tokens: Vec<Token> = seq.tokens().to_vec();
    let prev = |tokens: &[Token]| position.checked_sub(1).map(|p| tokens[p].surface.clone());
    match op {
        MutationOp::Insert => {
            if len + 1 > max_len {
                return Err(MutationError::TooLong { max: max_len });
            }
            let t = vocab.token(token, prev(&tokens).as_deref());
            tokens.insert(position, t);
        }
        MutationOp::Delete => {
            if len == 1 {
                return Err(MutationError::WouldBeEmpty);
            }
            tokens.remove(position);
        }
        MutationOp::Replace => {
            let t = vocab.token(token, prev(&tokens).as_deref());
            tokens[position] = t;
        }
    }
    Ok(TokenSequence::new(tokens, Origin::Mutated).expect("non-empty by construction"))
}

/// Every legal action on a sequence of `len` tokens over `vocab_size`
/// tokens, in (op, position, token) order. Deletions appear once per position.
pub fn enumerate_actions(len: usize, vocab_size: usize, max_len: usize) -> Vec<MutationAction> {
    let mut out = Vec::new();
    if len < max_len {
        for p in 0..=len {
            out.extend((0..vocab_size as u32).map(|t| MutationAction::insert(p, t)));
        }
    }
    if len > 1 {
        out.extend((0..len).map(MutationAction::delete));
    }
    for p in 0..len {
        out.extend((0..vocab_size as u32).map(|t| MutationAction::replace(p, t)));
    }
    out
}

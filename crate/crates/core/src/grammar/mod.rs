//! Payload validity checking and grammar-based generation.
//!
//! Two payload dialects are shipped: SQL-injection fragments (the text that
//! lands inside a query template) and markup/script fragments (the text that
//! lands inside an HTML page). Both checkers are recursive-descent parsers
//! with one token of lookahead; the first failure wins and is reported as a
//! token index. [`sql`] holds the full-statement parser used by the embedded
//! victim database.

mod fragment;
mod generate;
mod markup;
mod parser;
pub mod sql;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TokenSequence;

pub use generate::{generate, generate_surfaces};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    SqlFragment,
    MarkupScript,
}

impl Dialect {
    pub const ALL: [Dialect; 2] = [Dialect::SqlFragment, Dialect::MarkupScript];

    pub fn name(self) -> &'static str {
        match self {
            Dialect::SqlFragment => "sql_fragment",
            Dialect::MarkupScript => "markup_script",
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown dialect {0:?}")]
pub struct UnknownDialect(pub String);

impl FromStr for Dialect {
    type Err = UnknownDialect;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sql_fragment" | "sql" => Ok(Dialect::SqlFragment),
            "markup_script" | "markup" | "html" => Ok(Dialect::MarkupScript),
            other => Err(UnknownDialect(other.to_string())),
        }
    }
}

/// Outcome of a validity check. `failure_position` is set exactly when the
/// sequence is not well formed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseVerdict {
    pub well_formed: bool,
    pub failure_position: Option<usize>,
    pub rule_trace: Vec<&'static str>,
}

impl ParseVerdict {
    fn ok(rule_trace: Vec<&'static str>) -> Self {
        Self { well_formed: true, failure_position: None, rule_trace }
    }

    fn failed(at: usize, rule_trace: Vec<&'static str>) -> Self {
        Self { well_formed: false, failure_position: Some(at), rule_trace }
    }

    /// Verdict for a candidate that could not be built at all.
    pub fn rejected() -> Self {
        Self::failed(0, Vec::new())
    }
}

/// Checks a token sequence against a dialect. Multi-piece (n-gram) tokens are
/// split into their pieces first; a failure inside one is reported at the
/// index of the containing token.
pub fn check(seq: &TokenSequence, dialect: Dialect) -> ParseVerdict {
    let mut pieces = Vec::with_capacity(seq.len());
    let mut owner = Vec::with_capacity(seq.len());
    for (i, t) in seq.tokens().iter().enumerate() {
        for p in t.surface.split(' ').filter(|p| !p.is_empty()) {
            pieces.push(p);
            owner.push(i);
        }
    }
    let mut v = check_pieces(&pieces, dialect);
    if let Some(at) = v.failure_position {
        v.failure_position = Some(owner.get(at).copied().unwrap_or(seq.len() - 1));
    }
    v
}

/// Checks tokenizer pieces directly. An empty input fails at index 0.
pub fn check_pieces(pieces: &[&str], dialect: Dialect) -> ParseVerdict {
    let (result, trace) = match dialect {
        Dialect::SqlFragment => fragment::parse(pieces),
        Dialect::MarkupScript => markup::parse(pieces),
    };
    match result {
        Ok(()) => ParseVerdict::ok(trace),
        Err(at) => ParseVerdict::failed(at.min(pieces.len().saturating_sub(1)), trace),
    }
}

/// Parses dialect name and checks; the string form of [`check`].
pub fn check_named(seq: &TokenSequence, dialect: &str) -> Result<ParseVerdict, UnknownDialect> {
    Ok(check(seq, dialect.parse()?))
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tokenizer::{join_pieces, split_pieces};
use super::{Token, TokenSequence, COL_ID, COL_SURFACE, TBL_ID, TBL_SURFACE};

/// Known table names and their columns. Matching is ASCII case-insensitive,
/// as SQL identifiers are.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: BTreeMap<String, Vec<String>>,
}

impl Schema {
    pub fn new<T: Into<String>, C: Into<String>>(tables: impl IntoIterator<Item = (T, Vec<C>)>) -> Self {
        Self {
            tables: tables
                .into_iter()
                .map(|(t, cols)| (t.into(), cols.into_iter().map(Into::into).collect()))
                .collect(),
        }
    }

    pub fn is_table(&self, name: &str) -> bool {
        self.tables.keys().any(|t| t.eq_ignore_ascii_case(name))
    }

    pub fn is_column(&self, name: &str) -> bool {
        self.tables.values().flatten().any(|c| c.eq_ignore_ascii_case(name))
    }

    pub fn first_table(&self) -> Option<&str> {
        self.tables.keys().next().map(String::as_str)
    }

    pub fn first_column(&self) -> Option<&str> {
        self.tables.values().flatten().next().map(String::as_str)
    }

    pub fn merge(&mut self, other: &Schema) {
        for (t, cols) in &other.tables {
            let entry = self.tables.entry(t.clone()).or_default();
            for c in cols {
                if !entry.contains(c) {
                    entry.push(c.clone());
                }
            }
        }
    }
}

/// Original identifiers replaced by placeholders, in order of appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReverseMap {
    pub tables: Vec<String>,
    pub columns: Vec<String>,
}

/// Replaces schema table names with `<TBL>` and column names with `<COL>`.
/// A name that is both a table and a column becomes `<TBL>`.
pub fn generalize_identifiers(seq: &TokenSequence, schema: &Schema) -> (TokenSequence, ReverseMap) {
    let mut reverse = ReverseMap::default();
    let tokens = seq
        .tokens()
        .iter()
        .map(|t| {
            if schema.is_table(&t.surface) {
                reverse.tables.push(t.surface.clone());
                Token { id: TBL_ID, surface: TBL_SURFACE.into(), spaced: t.spaced }
            } else if schema.is_column(&t.surface) {
                reverse.columns.push(t.surface.clone());
                Token { id: COL_ID, surface: COL_SURFACE.into(), spaced: t.spaced }
            } else {
                t.clone()
            }
        })
        .collect();
    let seq = TokenSequence::new(tokens, seq.origin).expect("same length as input");
    (seq, reverse)
}

/// Text-level form of [`generalize_identifiers`]: splits `raw` into pieces,
/// swaps schema identifiers for placeholders and joins the pieces again.
pub fn generalize_text(raw: &str, schema: &Schema) -> (String, ReverseMap) {
    let mut reverse = ReverseMap::default();
    let pieces = split_pieces(raw);
    let surfaces: Vec<(String, bool)> = pieces
        .into_iter()
        .map(|p| {
            let s = if schema.is_table(&p.surface) {
                reverse.tables.push(p.surface);
                TBL_SURFACE.to_string()
            } else if schema.is_column(&p.surface) {
                reverse.columns.push(p.surface);
                COL_SURFACE.to_string()
            } else {
                p.surface
            };
            (s, p.spaced)
        })
        .collect();
    (join_pieces(surfaces.iter().map(|(s, sp)| (s.as_str(), *sp))), reverse)
}

/// Renders `text` with placeholders filled from `reverse` in order, falling
/// back to the schema's first table/column once the recorded names run out.
pub fn concretize(text: &str, reverse: &ReverseMap, schema: &Schema) -> String {
    let mut out = String::with_capacity(text.len());
    let (mut ti, mut ci) = (0, 0);
    let mut rest = text;
    loop {
        let next_t = rest.find(TBL_SURFACE);
        let next_c = rest.find(COL_SURFACE);
        let (pos, is_table) = match (next_t, next_c) {
            (None, None) => break,
            (Some(t), None) => (t, true),
            (None, Some(c)) => (c, false),
            (Some(t), Some(c)) => if t < c { (t, true) } else { (c, false) },
        };
        out.push_str(&rest[..pos]);
        let name = if is_table {
            ti += 1;
            reverse.tables.get(ti - 1).map(String::as_str).or(schema.first_table()).unwrap_or("t")
        } else {
            ci += 1;
            reverse.columns.get(ci - 1).map(String::as_str).or(schema.first_column()).unwrap_or("c")
        };
        out.push_str(name);
        rest = &rest[pos + TBL_SURFACE.len()..];
    }
    out.push_str(rest);
    out
}

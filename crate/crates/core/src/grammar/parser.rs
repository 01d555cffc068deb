//! Cursor and token classes shared by the two payload checkers.

use crate::corpus::{is_word, COL_SURFACE, TBL_SURFACE};

pub(super) type PResult = Result<(), usize>;

pub(super) struct Cursor<'a> {
    toks: &'a [&'a str],
    pub pos: usize,
    pub trace: Vec<&'static str>,
}

impl<'a> Cursor<'a> {
    pub fn new(toks: &'a [&'a str]) -> Self {
        Self { toks, pos: 0, trace: Vec::new() }
    }

    pub fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).copied()
    }

    pub fn peek_at(&self, offset: usize) -> Option<&'a str> {
        self.toks.get(self.pos + offset).copied()
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn bump(&mut self) -> &'a str {
        let t = self.toks[self.pos];
        self.pos += 1;
        t
    }

    pub fn rule(&mut self, name: &'static str) {
        self.trace.push(name);
    }

    pub fn fail<T>(&self) -> Result<T, usize> {
        Err(self.pos)
    }

    /// Consumes `sym` (exact match) or fails here.
    pub fn expect(&mut self, sym: &str) -> PResult {
        if self.peek() == Some(sym) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail()
        }
    }

    pub fn eat(&mut self, sym: &str) -> bool {
        if self.peek() == Some(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn peek_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.eq_ignore_ascii_case(kw))
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> PResult {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.fail()
        }
    }

    pub fn expect_end(&self) -> PResult {
        if self.at_end() {
            Ok(())
        } else {
            self.fail()
        }
    }
}

pub(super) const SQL_KEYWORDS: &[&str] = &[
    "ALL", "AND", "BY", "DELAY", "DROP", "ELSE", "END", "FROM", "IF", "INSERT", "INTO", "LIKE", "NOT",
    "NULL", "OR", "ORDER", "SELECT", "SET", "TABLE", "THEN", "UNION", "UPDATE", "VALUES", "WAITFOR",
    "WHERE",
];

pub(super) fn is_sql_keyword(t: &str) -> bool {
    SQL_KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(t))
}

pub(super) fn is_number(t: &str) -> bool {
    let mut dot = false;
    !t.is_empty()
        && t.chars().next().is_some_and(|c| c.is_ascii_digit())
        && t.chars().all(|c| {
            if c == '.' && !dot {
                dot = true;
                true
            } else {
                c.is_ascii_digit()
            }
        })
}

pub(super) fn is_string_literal(t: &str) -> bool {
    let b = t.as_bytes();
    b.len() >= 2 && (b[0] == b'\'' || b[0] == b'"') && b[b.len() - 1] == b[0]
}

pub(super) fn is_quote(t: &str) -> bool {
    t == "'" || t == "\""
}

/// Identifier: a word starting with a letter, `_` or `@`, or a placeholder.
pub(super) fn is_identifier(t: &str) -> bool {
    if t == COL_SURFACE || t == TBL_SURFACE {
        return true;
    }
    is_word(t)
        && t.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '@')
        && t.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '@' | '$'))
}

pub(super) fn is_sql_identifier(t: &str) -> bool {
    is_identifier(t) && !is_sql_keyword(t)
}

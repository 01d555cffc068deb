//! Rule-based payload tokenizer.
//!
//! Text is split on whitespace, then each chunk is cut into pieces. The
//! characters `' " ( ) ; , = < > - #` become standalone pieces, except that
//! quoted literals (`'a'`, `"x"`, `''`) and comment markers (`--`, `/*`, `*/`)
//! are kept whole. The identifier placeholders `<COL>` and `<TBL>` are
//! recognised as single pieces so generalized payloads survive a round trip.

use super::{COL_SURFACE, TBL_SURFACE};

/// One tokenizer output: a text fragment plus whether it was preceded by
/// whitespace in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Piece {
    pub surface: String,
    pub spaced: bool,
}

impl Piece {
    pub fn new(surface: impl Into<String>, spaced: bool) -> Self {
        Self { surface: surface.into(), spaced }
    }
}

const SPLIT_CHARS: &[char] = &['\'', '"', '(', ')', ';', ',', '=', '<', '>', '-', '#'];
const MARKERS: &[&str] = &["--", "/*", "*/"];
const PLACEHOLDERS: &[&str] = &[COL_SURFACE, TBL_SURFACE];

fn is_split(c: char) -> bool {
    SPLIT_CHARS.contains(&c)
}

fn marker_at(s: &str) -> Option<&'static str> {
    MARKERS
        .iter()
        .chain(PLACEHOLDERS.iter())
        .find(|m| s.starts_with(**m))
        .copied()
}

/// Splits raw payload text into pieces. Never fails; an empty or all-blank
/// input yields no pieces.
pub fn split_pieces(raw: &str) -> Vec<Piece> {
    let mut out = Vec::new();
    for chunk in raw.split_whitespace() {
        let mut spaced = !out.is_empty();
        let mut rest = chunk;
        while !rest.is_empty() {
            let (piece, tail) = next_piece(rest);
            out.push(Piece::new(piece, spaced));
            spaced = false;
            rest = tail;
        }
    }
    out
}

fn next_piece(s: &str) -> (&str, &str) {
    if let Some(m) = marker_at(s) {
        return s.split_at(m.len());
    }
    let first = s.chars().next().expect("non-empty");
    if first == '\'' || first == '"' {
        if let Some(end) = s[1..].find(first) {
            return s.split_at(end + 2);
        }
        return s.split_at(1);
    }
    if is_split(first) {
        return s.split_at(first.len_utf8());
    }
    let mut end = 0;
    for (i, c) in s.char_indices() {
        if i > 0 && (is_split(c) || c == '\'' || c == '"' || marker_at(&s[i..]).is_some()) {
            break;
        }
        end = i + c.len_utf8();
    }
    s.split_at(end)
}

/// Whether a surface is a "word" piece, i.e. neither punctuation, a quote,
/// a quoted literal nor a comment marker.
pub fn is_word(surface: &str) -> bool {
    let Some(first) = surface.chars().next() else {
        return false;
    };
    !(is_split(first) || MARKERS.contains(&surface) || PLACEHOLDERS.contains(&surface))
}

/// Spacing used when a token is placed next to `prev` without source text to
/// copy it from. Glues after `<` and `(`, before `>` and `)`, and an opening
/// parenthesis directly after a word (`alert(`).
pub fn default_spacing(prev: Option<&str>, surface: &str) -> bool {
    let Some(prev) = prev else {
        return false;
    };
    let prev_last = prev.rsplit(' ').next().unwrap_or(prev);
    let first = surface.split(' ').next().unwrap_or(surface);
    if prev_last == "<" || prev_last == "(" || first == ">" || first == ")" {
        return false;
    }
    if first == "(" && is_word(prev_last) {
        return false;
    }
    true
}

/// Joins pieces back into text, honouring each piece's spacing flag.
pub fn join_pieces<'a>(pieces: impl IntoIterator<Item = (&'a str, bool)>) -> String {
    let mut out = String::new();
    for (i, (surface, spaced)) in pieces.into_iter().enumerate() {
        if i > 0 && spaced {
            out.push(' ');
        }
        out.push_str(surface);
    }
    out
}

//! Random sentence generation for both payload grammars.
//!
//! `depth_cap` bounds every repetition and nesting level: the number of
//! boolean conditions, stacked statements, union columns, attributes and
//! script calls, and the depth of nested parentheses and call arguments.
//! Surfaces are emitted as tokenizer pieces, so rendering a sentence with
//! [`default_spacing`](crate::corpus::default_spacing) and tokenizing it again
//! yields the same pieces.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::markup::TAGS;
use super::Dialect;
use crate::corpus::{Origin, TokenSequence, Vocab, COL_SURFACE, TBL_SURFACE};

const LEAD_WORDS: &[&str] = &["admin", "guest", "x"];
const NUMBERS: &[&str] = &["0", "1", "2", "5", "42"];
const STRINGS: &[&str] = &["'a'", "'b'", "'x'", "'1'"];
const FUNCS: &[&str] = &["SLEEP", "ASCII", "LENGTH"];
const JS_FUNCS: &[&str] = &["alert", "confirm", "prompt", "print"];
const JS_ARGS: &[&str] = &["1", "document.cookie", "document.domain", "'xss'"];
const EVENTS: &[&str] = &["onerror", "onload", "onmouseover", "onfocus", "onclick"];
const PLAIN_ATTRS: &[&str] = &["src", "id", "autofocus", "title"];
const TEXT: &[&str] = &["click", "hello", "x"];

/// Generates a sentence of `dialect` as tokens of `vocab` (base tokens, no
/// n-gram merging). Unknown pieces keep their surface and get the UNK id.
pub fn generate<R: Rng + ?Sized>(vocab: &Vocab, dialect: Dialect, rng: &mut R, depth_cap: usize) -> TokenSequence {
    let surfaces = generate_surfaces(dialect, rng, depth_cap);
    vocab
        .from_surfaces(&surfaces, Origin::Seed)
        .expect("generated sentences are never empty")
}

/// Generates a sentence of `dialect` as bare piece surfaces.
pub fn generate_surfaces<R: Rng + ?Sized>(dialect: Dialect, rng: &mut R, depth_cap: usize) -> Vec<String> {
    let depth = depth_cap.max(1);
    let mut g = Gen { rng, out: Vec::new() };
    match dialect {
        Dialect::SqlFragment => g.fragment(depth),
        Dialect::MarkupScript => g.markup(depth),
    }
    g.out.into_iter().map(str::to_string).collect()
}

struct Gen<'r, R: Rng + ?Sized> {
    rng: &'r mut R,
    out: Vec<&'static str>,
}

impl<R: Rng + ?Sized> Gen<'_, R> {
    fn push(&mut self, parts: &[&'static str]) {
        self.out.extend_from_slice(parts);
    }

    fn pick(&mut self, options: &[&'static str]) -> &'static str {
        options.choose(self.rng).copied().expect("non-empty option list")
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random_bool(p)
    }

    /// Count in 1..=cap.
    fn count(&mut self, cap: usize) -> usize {
        self.rng.random_range(1..=cap.max(1))
    }

    fn fragment(&mut self, depth: usize) {
        if depth >= 3 && self.chance(0.1) {
            self.if_block(depth - 1);
            return;
        }
        let closed = match self.rng.random_range(0..6) {
            0 => {
                self.push(&["'"]);
                true
            }
            1 => {
                self.push(&["'", ")"]);
                true
            }
            2 => {
                let w = self.pick(LEAD_WORDS);
                self.push(&[w, "'"]);
                true
            }
            3 => {
                self.push(&["1"]);
                false
            }
            4 => {
                self.push(&["1", ")"]);
                true
            }
            _ => {
                self.push(&["-", "1"]);
                false
            }
        };
        if depth == 1 {
            self.bool_tail(1);
            return;
        }
        let start = self.out.len();
        if self.chance(0.6) {
            self.bool_tail(depth);
        }
        if self.chance(0.15) {
            self.push(&["ORDER", "BY"]);
            let n = self.pick(NUMBERS);
            self.push(&[n]);
        }
        if self.chance(0.3) {
            self.push(&["UNION"]);
            if self.chance(0.3) {
                self.push(&["ALL"]);
            }
            self.push(&["SELECT"]);
            self.items(depth);
            if self.chance(0.5) {
                self.push(&["FROM", TBL_SURFACE]);
            }
        }
        if self.chance(0.3) {
            for _ in 0..self.count(depth - 1) {
                self.push(&[";"]);
                self.statement(depth - 1);
            }
            if self.chance(0.5) {
                self.push(&[";"]);
            }
        }
        if closed && self.out.len() == start {
            self.bool_tail(depth);
        }
        if self.chance(0.5) {
            let c = self.pick(&["--", "#"]);
            self.push(&[c]);
        }
    }

    fn bool_tail(&mut self, depth: usize) {
        for _ in 0..self.count(depth) {
            let op = self.pick(&["OR", "AND"]);
            self.push(&[op]);
            self.cond(depth - 1);
        }
    }

    /// `nest` is how many more levels of NOT / parentheses are allowed.
    fn cond(&mut self, nest: usize) {
        match if nest == 0 { 0 } else { self.rng.random_range(0..6) } {
            4 => {
                self.push(&["NOT"]);
                self.cond(nest - 1);
            }
            5 => {
                self.push(&["("]);
                self.cond_expr(nest - 1);
                self.push(&[")"]);
            }
            _ if nest > 0 && self.chance(0.1) => self.call(),
            _ => {
                self.operand();
                self.comparison();
                self.operand();
            }
        }
    }

    fn cond_expr(&mut self, nest: usize) {
        self.cond(nest);
        for _ in 1..self.count(nest + 1) {
            let op = self.pick(&["OR", "AND"]);
            self.push(&[op]);
            self.cond(nest);
        }
    }

    fn comparison(&mut self) {
        match self.rng.random_range(0..8) {
            0 => self.push(&["<"]),
            1 => self.push(&[">"]),
            2 => self.push(&["<", "="]),
            3 => self.push(&[">", "="]),
            4 => self.push(&["<", ">"]),
            5 => self.push(&["LIKE"]),
            _ => self.push(&["="]),
        }
    }

    fn operand(&mut self) {
        match self.rng.random_range(0..5) {
            0 | 1 => {
                let n = self.pick(NUMBERS);
                self.push(&[n]);
            }
            2 | 3 => {
                let s = self.pick(STRINGS);
                self.push(&[s]);
            }
            _ => self.push(&[COL_SURFACE]),
        }
    }

    fn literal(&mut self) {
        match self.rng.random_range(0..5) {
            0 | 1 => {
                let n = self.pick(NUMBERS);
                self.push(&[n]);
            }
            2 | 3 => {
                let s = self.pick(STRINGS);
                self.push(&[s]);
            }
            _ => self.push(&["NULL"]),
        }
    }

    fn call(&mut self) {
        let f = self.pick(FUNCS);
        let n = self.pick(NUMBERS);
        self.push(&[f, "(", n, ")"]);
    }

    fn items(&mut self, depth: usize) {
        for i in 0..self.count(depth.min(5)) {
            if i > 0 {
                self.push(&[","]);
            }
            match self.rng.random_range(0..4) {
                0 => self.push(&["NULL"]),
                1 => self.push(&[COL_SURFACE]),
                _ => {
                    let n = self.pick(NUMBERS);
                    self.push(&[n]);
                }
            }
        }
    }

    fn statement(&mut self, depth: usize) {
        let depth = depth.max(1);
        match self.rng.random_range(0..5) {
            0 => {
                self.push(&["INSERT", "INTO", TBL_SURFACE]);
                let n = self.count(depth.min(3));
                if self.chance(0.5) {
                    self.push(&["("]);
                    for i in 0..n {
                        if i > 0 {
                            self.push(&[","]);
                        }
                        self.push(&[COL_SURFACE]);
                    }
                    self.push(&[")"]);
                }
                self.push(&["VALUES", "("]);
                for i in 0..n {
                    if i > 0 {
                        self.push(&[","]);
                    }
                    self.literal();
                }
                self.push(&[")"]);
            }
            1 => {
                self.push(&["UPDATE", TBL_SURFACE, "SET", COL_SURFACE, "="]);
                self.literal();
                if self.chance(0.5) {
                    self.push(&["WHERE"]);
                    self.cond_expr(depth - 1);
                }
            }
            2 => self.push(&["DROP", "TABLE", TBL_SURFACE]),
            3 => {
                self.push(&["SELECT"]);
                self.items(depth);
                if self.chance(0.5) {
                    self.push(&["FROM", TBL_SURFACE]);
                }
            }
            _ => self.push(&["WAITFOR", "DELAY", "'0:0:5'"]),
        }
    }

    fn if_block(&mut self, depth: usize) {
        self.push(&["IF", "("]);
        self.cond_expr(depth.saturating_sub(1));
        self.push(&[")", "THEN"]);
        self.action(depth);
        self.push(&[";"]);
        if self.chance(0.5) {
            self.push(&["ELSE"]);
            self.action(depth);
            self.push(&[";"]);
        }
        self.push(&["END", "IF", ";"]);
        if self.chance(0.5) {
            self.push(&["END", ";"]);
        }
    }

    fn action(&mut self, depth: usize) {
        if self.chance(0.7) {
            let n = self.pick(NUMBERS);
            self.push(&["dbms_lock.sleep", "(", n, ")"]);
        } else {
            self.statement(depth);
        }
    }

    fn markup(&mut self, depth: usize) {
        match self.rng.random_range(0..8) {
            0 => {
                self.js_uri(depth);
                return;
            }
            1 => {
                self.breakout(depth);
                return;
            }
            2 => {
                let q = self.pick(&["'", "\""]);
                self.push(&[q, ">"]);
            }
            3 => self.push(&[">"]),
            _ => {}
        }
        for _ in 0..self.count(depth.min(2)) {
            if self.chance(0.5) {
                self.script(depth);
            } else {
                self.tag(depth);
            }
        }
    }

    fn breakout(&mut self, depth: usize) {
        let q = self.pick(&["'", "\""]);
        self.push(&[q]);
        self.event_attr(depth);
        for _ in 1..self.count(depth) {
            self.attr(depth);
        }
        if self.chance(0.5) {
            self.push(&["x", "=", q]);
        }
    }

    fn script(&mut self, depth: usize) {
        self.push(&["<", "script", ">"]);
        for i in 0..self.count(depth) {
            if i > 0 {
                self.push(&[";"]);
            }
            self.js_call(depth - 1);
        }
        if self.chance(0.3) {
            self.push(&[";"]);
        }
        self.push(&["<", "/script", ">"]);
    }

    fn tag(&mut self, depth: usize) {
        let tag = self.pick(TAGS);
        self.push(&["<", tag]);
        self.event_attr(depth);
        for _ in 1..self.count(depth) {
            self.attr(depth);
        }
        if self.chance(0.2) {
            self.push(&["/"]);
        }
        self.push(&[">"]);
        if self.chance(0.3) {
            let t = self.pick(TEXT);
            self.push(&[t]);
            if let Some(close) = closing_tag(tag) {
                self.push(&["<", close, ">"]);
            }
        }
    }

    fn event_attr(&mut self, depth: usize) {
        let ev = self.pick(EVENTS);
        self.push(&[ev, "="]);
        self.js_call(depth - 1);
    }

    fn attr(&mut self, depth: usize) {
        if self.chance(0.5) {
            self.event_attr(depth);
            return;
        }
        let name = self.pick(PLAIN_ATTRS);
        self.push(&[name]);
        match self.rng.random_range(0..4) {
            0 => {}
            1 => self.push(&["=", "x"]),
            2 => {
                let s = self.pick(&["'x'", "'1'"]);
                self.push(&["=", s]);
            }
            _ => {
                self.push(&["="]);
                self.js_uri(depth);
            }
        }
    }

    fn js_uri(&mut self, depth: usize) {
        let f = self.pick(&["javascript:alert", "javascript:confirm", "javascript:prompt"]);
        self.push(&[f]);
        self.js_args(depth.saturating_sub(1));
    }

    fn js_call(&mut self, nest: usize) {
        let f = self.pick(JS_FUNCS);
        self.push(&[f]);
        self.js_args(nest);
    }

    fn js_args(&mut self, nest: usize) {
        self.push(&["("]);
        let n = self.rng.random_range(0..=nest.min(2));
        for i in 0..n.max(1) {
            if i > 0 {
                self.push(&[","]);
            }
            if nest > 0 && self.chance(0.2) {
                self.js_call(nest - 1);
            } else {
                let a = self.pick(JS_ARGS);
                self.push(&[a]);
            }
        }
        self.push(&[")"]);
    }
}

fn closing_tag(tag: &str) -> Option<&'static str> {
    const CLOSERS: &[(&str, &str)] = &[
        ("a", "/a"),
        ("audio", "/audio"),
        ("body", "/body"),
        ("details", "/details"),
        ("div", "/div"),
        ("iframe", "/iframe"),
        ("marquee", "/marquee"),
        ("object", "/object"),
        ("svg", "/svg"),
        ("video", "/video"),
    ];
    CLOSERS.iter().find(|(t, _)| *t == tag).map(|(_, c)| *c)
}

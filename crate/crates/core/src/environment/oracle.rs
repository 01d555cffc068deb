//! Attack detection by differencing a payload's effect against a replay of
//! the same text treated as an inert literal.

use super::html::constructs;
use super::minidb::{Database, Execution};
use super::{AttackClass, EnvError};
use crate::grammar::sql::{escape_literal, parse_script};

pub const SLOT: &str = "<INJ>";

/// A query with exactly one injection slot.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SqlTemplate {
    pub text: String,
    /// The driver refuses scripts with more than one statement.
    pub single_statement: bool,
}

impl SqlTemplate {
    pub fn new(text: &str) -> Self {
        Self { text: text.into(), single_statement: false }
    }

    pub fn single(text: &str) -> Self {
        Self { text: text.into(), single_statement: true }
    }

    fn split(&self) -> Result<(&str, &str), EnvError> {
        split_slot(&self.text)
    }

    fn quoted(&self) -> Result<bool, EnvError> {
        Ok(self.split()?.0.ends_with('\''))
    }

    /// The query a victim would run for `value`.
    pub fn instantiate(&self, value: &str) -> Result<String, EnvError> {
        let (pre, post) = self.split()?;
        Ok(format!("{pre}{value}{post}"))
    }

    /// The query run when `value` is handled safely: escaped inside a
    /// quoted slot; in a bare slot, kept if it is an integer and otherwise
    /// passed as a quoted string.
    pub fn literal_replay(&self, value: &str) -> Result<String, EnvError> {
        if self.quoted()? {
            return self.instantiate(&escape_literal(value));
        }
        let t = value.trim();
        let digits = t.strip_prefix('-').unwrap_or(t);
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            self.instantiate(t)
        } else {
            self.instantiate(&format!("'{}'", escape_literal(value)))
        }
    }
}

pub(crate) fn split_slot(text: &str) -> Result<(&str, &str), EnvError> {
    let mut parts = text.split(SLOT);
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(EnvError::MalformedTemplate(text.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOutcome {
    pub parsed_ok: bool,
    pub class: Option<AttackClass>,
}

/// `a` is a sub-multiset of `b`.
fn contained(a: &[Vec<super::minidb::Value>], b: &[Vec<super::minidb::Value>]) -> bool {
    let mut pool: Vec<&Vec<_>> = b.iter().collect();
    a.iter().all(|row| match pool.iter().position(|r| *r == row) {
        Some(i) => {
            pool.swap_remove(i);
            true
        }
        None => false,
    })
}

fn run(db: &Database, query: &str) -> Option<Execution> {
    let script = parse_script(query).ok()?;
    Some(db.clone().execute(&script))
}

/// Runs `value` (already through the sanitizers) in `template` against a
/// copy of `db` and classifies the difference from the literal replay.
pub fn sqli_oracle(template: &SqlTemplate, db: &Database, value: &str) -> Result<OracleOutcome, EnvError> {
    let (pre, post) = template.split()?;
    let query = template.instantiate(value)?;
    let Ok(script) = parse_script(&query) else {
        return Ok(OracleOutcome { parsed_ok: false, class: None });
    };
    if template.single_statement && script.statements.len() > 1 {
        return Ok(OracleOutcome { parsed_ok: false, class: None });
    }
    let hit = db.clone().execute(&script);
    let base = run(db, &template.literal_replay(value)?).unwrap_or_default();
    let done = |class| Ok(OracleOutcome { parsed_ok: true, class });

    for kind in hit.executed.iter().skip(1) {
        match *kind {
            "insert" => return done(Some(AttackClass::StackedInsert)),
            "update" => return done(Some(AttackClass::StackedUpdate)),
            "drop" => return done(Some(AttackClass::StackedDrop)),
            _ => {}
        }
    }
    if hit.rows.len() > base.rows.len() && contained(&base.rows, &hit.rows) {
        let truncated = script.first_comment.is_some_and(|c| c >= pre.len() && c < pre.len() + value.len()) && !post.trim().is_empty();
        let class = if hit.extra_rows > 0 {
            AttackClass::Union
        } else if hit.first_table_rows == Some(hit.rows.len()) {
            AttackClass::Tautology
        } else if truncated {
            AttackClass::CommentBypass
        } else {
            AttackClass::Tautology
        };
        return done(Some(class));
    }
    done(None)
}

/// Renders `value` (already through the sanitizers) into `page` and
/// reports executable constructs beyond those the page has on its own.
pub fn xss_oracle(page: &str, value: &str) -> Result<OracleOutcome, EnvError> {
    let (pre, post) = split_slot(page)?;
    let base = constructs(&format!("{pre}{post}"));
    let hit = constructs(&format!("{pre}{value}{post}"));
    let class = if hit.scripts > base.scripts {
        Some(AttackClass::XssScript)
    } else if hit.handlers > base.handlers || hit.js_uris > base.js_uris {
        Some(AttackClass::XssAttribute)
    } else {
        None
    };
    Ok(OracleOutcome { parsed_ok: true, class })
}

/// Escapes the five HTML-significant characters.
pub fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

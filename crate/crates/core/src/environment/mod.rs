//! Victim applications: embedded vulnerable apps with sanitizers and attack
//! oracles, an HTTP adapter for external targets, and a form crawler.

pub mod apps;
mod crawl;
pub mod html;
mod http;
pub mod minidb;
pub mod oracle;
mod sanitize;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::grammar::Dialect;

pub use apps::{embedded_apps, fixture_db, EmbeddedApp, EmbeddedSite, EmbeddedSuite};
pub use crawl::{crawl, resolve, CrawlConfig, PageSource};
pub use http::{HttpConfig, HttpSource, HttpVictim};
pub use oracle::{html_escape, sqli_oracle, xss_oracle, OracleOutcome, SqlTemplate, SLOT};
pub use sanitize::{Chain, SanitizerSpec};

/// Largest payload accepted by `submit`, in bytes.
pub const PAYLOAD_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown injection point {0}")]
    UnknownPoint(String),
    #[error("unknown app {0}")]
    UnknownApp(String),
    #[error("payload of {0} bytes exceeds the cap")]
    PayloadTooLong(usize),
    #[error("template must contain exactly one slot: {0}")]
    MalformedTemplate(String),
    #[error("sanitizer: {0}")]
    Sanitizer(String),
    #[error("unreachable target {0}")]
    Unreachable(String),
    #[error("http: {0}")]
    Http(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    SqlWhereString,
    SqlWhereNumeric,
    SqlInsertValue,
    HtmlBody,
    HtmlAttribute,
}

impl Context {
    pub fn dialect(self) -> Dialect {
        match self {
            Context::HtmlBody | Context::HtmlAttribute => Dialect::MarkupScript,
            _ => Dialect::SqlFragment,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackClass {
    Tautology,
    Union,
    StackedInsert,
    StackedUpdate,
    StackedDrop,
    CommentBypass,
    XssScript,
    XssAttribute,
}

impl fmt::Display for AttackClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

/// Where a crawled field is submitted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct FormTarget {
    pub url: String,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct InjectionPoint {
    pub app: String,
    pub field: String,
    pub context: Context,
    pub sanitizers: Vec<SanitizerSpec>,
    pub target: Option<FormTarget>,
}

impl InjectionPoint {
    pub fn id(&self) -> String {
        format!("{}/{}", self.app, self.field)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VictimVerdict {
    /// The victim could parse the query or page it built.
    pub parsed_ok: bool,
    pub sanitizer_blocked: bool,
    pub attack_success: bool,
    pub attack_class: Option<AttackClass>,
    /// `app/field` of the injection point.
    pub field: String,
    /// Identifier of the query or page template the value reached.
    pub template: String,
    /// First time this (field, class) pair was observed.
    pub novel: bool,
}

impl VictimVerdict {
    pub fn blocked(point: &InjectionPoint, template: &str) -> Self {
        Self {
            parsed_ok: true,
            sanitizer_blocked: true,
            attack_success: false,
            attack_class: None,
            field: point.id(),
            template: template.into(),
            novel: false,
        }
    }

    pub fn from_outcome(point: &InjectionPoint, template: &str, o: OracleOutcome) -> Self {
        Self {
            parsed_ok: o.parsed_ok,
            sanitizer_blocked: false,
            attack_success: o.class.is_some(),
            attack_class: o.class,
            field: point.id(),
            template: template.into(),
            novel: false,
        }
    }
}

/// Something that accepts payloads for injection points and says whether
/// they attacked it.
pub trait Victim {
    fn submit(&mut self, point: &InjectionPoint, payload: &str) -> Result<VictimVerdict, EnvError>;
}

/// A victim plus the set of (field, class) pairs seen so far.
pub struct Environment {
    victim: Box<dyn Victim>,
    seen: BTreeSet<(String, AttackClass)>,
}

impl Environment {
    pub fn new(victim: Box<dyn Victim>) -> Self {
        Self { victim, seen: BTreeSet::new() }
    }

    pub fn embedded() -> Self {
        Self::new(Box::new(EmbeddedSuite::new()))
    }

    pub fn submit(&mut self, point: &InjectionPoint, payload: &str) -> Result<VictimVerdict, EnvError> {
        if payload.len() > PAYLOAD_CAP {
            return Err(EnvError::PayloadTooLong(payload.len()));
        }
        let mut v = self.victim.submit(point, payload)?;
        if let Some(class) = v.attack_class {
            v.novel = self.seen.insert((v.field.clone(), class));
        }
        Ok(v)
    }
}

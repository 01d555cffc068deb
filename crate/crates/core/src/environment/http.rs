//! Adapter for victims reachable over HTTP. Detection is best-effort:
//! error and success signatures plus response differencing against a
//! neutralized copy of the payload.

use std::time::Duration;

use regex::Regex;

use super::crawl::PageSource;
use super::html::constructs;
use super::{AttackClass, Context, EnvError, InjectionPoint, Victim, VictimVerdict};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub timeout_secs: f64,
    pub headers: Vec<(String, String)>,
    /// Patterns meaning the victim failed to parse what it built.
    pub error_signatures: Vec<String>,
    /// Patterns meaning an attack went through.
    pub success_signatures: Vec<String>,
    /// Smallest body-length change, in bytes, counted as a difference.
    pub min_difference: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            timeout_secs: 10.0,
            headers: Vec::new(),
            error_signatures: [
                r"(?i)you have an error in your sql syntax",
                r"(?i)syntax error",
                r"(?i)unclosed quotation mark",
                r"(?i)unterminated (quoted )?string",
                r"ORA-\d{5}",
                r"SQLSTATE\[",
            ]
            .map(String::from)
            .to_vec(),
            success_signatures: Vec::new(),
            min_difference: 32,
        }
    }
}

fn client(cfg: &HttpConfig) -> Result<reqwest::blocking::Client, EnvError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(cfg.timeout_secs))
        .build()
        .map_err(|e| EnvError::Http(e.to_string()))
}

/// Fetches pages with GET for the crawler.
pub struct HttpSource {
    client: reqwest::blocking::Client,
    cfg: HttpConfig,
}

impl HttpSource {
    pub fn new(cfg: HttpConfig) -> Result<Self, EnvError> {
        Ok(Self { client: client(&cfg)?, cfg })
    }
}

impl PageSource for HttpSource {
    fn fetch(&mut self, url: &str) -> Result<String, EnvError> {
        let mut req = self.client.get(url);
        for (k, v) in &self.cfg.headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(|e| EnvError::Unreachable(format!("{url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(EnvError::Unreachable(format!("{url}: status {}", resp.status())));
        }
        resp.text().map_err(|e| EnvError::Http(e.to_string()))
    }
}

pub struct HttpVictim {
    client: reqwest::blocking::Client,
    cfg: HttpConfig,
    errors: Vec<Regex>,
    successes: Vec<Regex>,
}

fn compile(patterns: &[String]) -> Result<Vec<Regex>, EnvError> {
    patterns.iter().map(|p| Regex::new(p).map_err(|e| EnvError::Http(format!("signature {p}: {e}")))).collect()
}

/// Keeps letters, digits and spaces, so the value reaches the victim as
/// plain data.
fn neutralize(payload: &str) -> String {
    payload.chars().filter(|c| c.is_alphanumeric() || *c == ' ').collect()
}

/// Best guess at the class of a SQL payload from its keywords.
fn guess_sql_class(payload: &str) -> AttackClass {
    let up = payload.to_ascii_uppercase();
    let stacked = |kw: &str| up.contains(';') && up.split(';').skip(1).any(|s| s.trim_start().starts_with(kw));
    if stacked("DROP") {
        AttackClass::StackedDrop
    } else if stacked("UPDATE") {
        AttackClass::StackedUpdate
    } else if stacked("INSERT") {
        AttackClass::StackedInsert
    } else if up.contains("UNION") {
        AttackClass::Union
    } else if up.contains(" OR ") {
        AttackClass::Tautology
    } else {
        AttackClass::CommentBypass
    }
}

impl HttpVictim {
    pub fn new(cfg: HttpConfig) -> Result<Self, EnvError> {
        Ok(Self { client: client(&cfg)?, errors: compile(&cfg.error_signatures)?, successes: compile(&cfg.success_signatures)?, cfg })
    }

    fn send(&self, point: &InjectionPoint, value: &str) -> Result<(u16, String), EnvError> {
        let target = point.target.as_ref().ok_or_else(|| EnvError::UnknownPoint(point.id()))?;
        let pair = [(point.field.as_str(), value)];
        let mut req = if target.method.eq_ignore_ascii_case("post") {
            self.client.post(&target.url).form(&pair)
        } else {
            self.client.get(&target.url).query(&pair)
        };
        for (k, v) in &self.cfg.headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(|e| EnvError::Http(e.to_string()))?;
        let status = resp.status().as_u16();
        Ok((status, resp.text().map_err(|e| EnvError::Http(e.to_string()))?))
    }
}

impl Victim for HttpVictim {
    fn submit(&mut self, point: &InjectionPoint, payload: &str) -> Result<VictimVerdict, EnvError> {
        let template = point.target.as_ref().map(|t| t.url.clone()).unwrap_or_default();
        let (status, body) = self.send(point, payload)?;
        let (base_status, base) = self.send(point, &neutralize(payload))?;
        let mut v = VictimVerdict {
            parsed_ok: true,
            sanitizer_blocked: false,
            attack_success: false,
            attack_class: None,
            field: point.id(),
            template,
            novel: false,
        };
        if matches!(status, 400 | 403 | 406) && !matches!(base_status, 400 | 403 | 406) {
            v.sanitizer_blocked = true;
            return Ok(v);
        }
        if self.errors.iter().any(|r| r.is_match(&body) && !r.is_match(&base)) {
            v.parsed_ok = false;
            return Ok(v);
        }
        let class = match point.context {
            Context::HtmlBody | Context::HtmlAttribute => {
                let (hit, base) = (constructs(&body), constructs(&base));
                if hit.scripts > base.scripts {
                    Some(AttackClass::XssScript)
                } else if hit.handlers > base.handlers || hit.js_uris > base.js_uris {
                    Some(AttackClass::XssAttribute)
                } else {
                    None
                }
            }
            _ => {
                let signed = self.successes.iter().any(|r| r.is_match(&body) && !r.is_match(&base));
                let grew = body.len() > base.len() + self.cfg.min_difference.max(base.len() / 20);
                (signed || grew).then(|| guess_sql_class(payload))
            }
        };
        v.attack_success = class.is_some();
        v.attack_class = class;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guesses_and_neutralizes() {
        assert_eq!(neutralize("' OR 'a' = 'a' --"), " OR a  a ");
        assert_eq!(guess_sql_class("'; DROP TABLE users ; --"), AttackClass::StackedDrop);
        assert_eq!(guess_sql_class("' UNION SELECT 1 --"), AttackClass::Union);
        assert_eq!(guess_sql_class("' OR 1 = 1 --"), AttackClass::Tautology);
    }
}

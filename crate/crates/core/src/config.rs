//! Run configuration for the command-line tool: defaults, then an optional
//! TOML file, then `key=value` overrides.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::campaign::{load_pretrained, CampaignConfig, CampaignError, Pretrained, SeedBank};
use crate::corpus::builtin::{sqli_seeds, xss_seeds};
use crate::corpus::{read_seed_file, Schema};
use crate::environment::{crawl, fixture_db, CrawlConfig, EmbeddedSuite, Environment, HttpConfig, HttpSource, HttpVictim, InjectionPoint};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Toml(String),
    #[error("override {0:?}: expected key=value")]
    Override(String),
    #[error("target {0:?}: expected `embedded`, `embedded:app1,app2` or an http(s) URL")]
    Target(String),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `embedded` for every embedded app, `embedded:login,shop` for some,
    /// or an http(s) URL to crawl.
    pub target: String,
    /// Pretrained encoder to start from; pretraining runs in-process when
    /// this is unset and `campaign.pretrain` is on.
    pub checkpoint: Option<PathBuf>,
    /// Seed files, one payload per line. The built-in corpora are used
    /// when unset.
    pub sqli_seeds: Option<PathBuf>,
    pub xss_seeds: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Event log, one JSON line per candidate.
    pub events: Option<PathBuf>,
    pub campaign: CampaignConfig,
    pub crawl: CrawlConfig,
    pub http: HttpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target: "embedded".into(),
            checkpoint: None,
            sqli_seeds: None,
            xss_seeds: None,
            report: None,
            events: None,
            campaign: CampaignConfig::default(),
            crawl: CrawlConfig::default(),
            http: HttpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// Embedded app ids; empty means all.
    Embedded(Vec<String>),
    Http(String),
}

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| ConfigError::Override(key.into()))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(|| ConfigError::Toml(format!("{key}: {p} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })
}

impl RunConfig {
    /// Defaults, overlaid with `file` and then with each `key=value`
    /// override (dotted keys reach nested tables).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match file {
            Some(p) => read(p)?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Toml(e.to_string()))?;
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Toml(e.to_string()))?;
        cfg.campaign.validate().map_err(|e| ConfigError::Toml(e.to_string()))?;
        cfg.target()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn target(&self) -> Result<Target, ConfigError> {
        let t = self.target.trim();
        if t.starts_with("http://") || t.starts_with("https://") {
            return Ok(Target::Http(t.to_string()));
        }
        let suite = EmbeddedSuite::new();
        let apps: Vec<String> = match t.strip_prefix("embedded") {
            Some("") => Vec::new(),
            Some(rest) => match rest.strip_prefix(':') {
                Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                None => return Err(ConfigError::Target(t.into())),
            },
            None => return Err(ConfigError::Target(t.into())),
        };
        if apps.iter().any(|a| suite.app(a).is_none()) {
            return Err(ConfigError::Target(t.into()));
        }
        Ok(Target::Embedded(apps))
    }

    fn seed_lines(&self) -> Result<(Vec<String>, Vec<String>), CampaignError> {
        let load = |p: &Option<PathBuf>, builtin: fn() -> Vec<String>| match p {
            Some(p) => read_seed_file(p).map_err(CampaignError::from),
            None => Ok(builtin()),
        };
        Ok((load(&self.sqli_seeds, sqli_seeds)?, load(&self.xss_seeds, xss_seeds)?))
    }

    /// Loads the checkpoint and seeds, discovers the injection points and
    /// connects to the target.
    pub fn prepare(&self) -> Result<(SeedBank, Vec<InjectionPoint>, Environment, Option<Pretrained>), CampaignError> {
        let target = self.target().map_err(|e| CampaignError::Config(e.to_string()))?;
        let checkpoint = self.checkpoint.as_deref().map(load_pretrained).transpose()?;
        let (sqli, xss) = self.seed_lines()?;
        let (schema, points, env) = match target {
            Target::Embedded(apps) => {
                let suite = EmbeddedSuite::new();
                let points = if apps.is_empty() {
                    suite.points()
                } else {
                    apps.iter().flat_map(|a| suite.app(a).map(|x| x.points()).unwrap_or_default()).collect()
                };
                (fixture_db().schema(), points, Environment::new(Box::new(suite)))
            }
            Target::Http(url) => {
                let mut source = HttpSource::new(self.http.clone())?;
                let points = crawl(&mut source, &url, &self.crawl)?;
                (Schema::default(), points, Environment::new(Box::new(HttpVictim::new(self.http.clone())?)))
            }
        };
        let bank = match &checkpoint {
            Some(p) => SeedBank::with_vocab(p.vocab.clone(), &sqli, &xss, schema)?,
            None => SeedBank::build(&sqli, &xss, schema, self.campaign.ngram_threshold)?,
        };
        Ok((bank, points, env, checkpoint))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::AgentKind;

    #[test]
    fn overrides_beat_file_beat_defaults() {
        let file = "target = \"embedded:login\"\n[campaign]\nseed = 7\nmax_candidates = 100\n";
        let cfg = RunConfig::from_toml(file, &["campaign.max_candidates=5".into(), "campaign.agent=random".into()]).unwrap();
        assert_eq!(cfg.campaign.seed, 7);
        assert_eq!(cfg.campaign.max_candidates, 5);
        assert_eq!(cfg.campaign.agent, AgentKind::Random);
        assert_eq!(cfg.campaign.max_mutations, 8);
        assert_eq!(cfg.target().unwrap(), Target::Embedded(vec!["login".into()]));
        let again = RunConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_targets_are_rejected() {
        assert!(RunConfig::from_toml("[campaign]\nbogus = 1\n", &[]).is_err());
        assert!(RunConfig::from_toml("", &["campaign.ppo.nope=1".into()]).is_err());
        assert!(RunConfig::from_toml("", &["novalue".into()]).is_err());
        assert!(RunConfig::from_toml("target = \"embedded:nowhere\"", &[]).is_err());
        assert!(RunConfig::from_toml("target = \"ftp://x\"", &[]).is_err());
        assert!(RunConfig::from_toml("", &["campaign.max_mutations=0".into()]).is_err());
        assert!(matches!(RunConfig::from_toml("target = \"http://127.0.0.1:1/\"", &[]).unwrap().target(), Ok(Target::Http(_))));
    }
}

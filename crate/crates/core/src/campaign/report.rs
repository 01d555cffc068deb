use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::{CampaignConfig, RewardKind};
use crate::agent::UpdateStats;
use crate::environment::AttackClass;
use crate::mutation::MutationAction;

pub const REPORT_HEADER: &str = "FUZZREPORT v1";

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsRecord {
    /// Seconds from the start of the campaign loop to the first attack.
    pub time_to_first_attack: Option<f64>,
    /// Candidates generated up to and including the first attack.
    pub candidates_to_first_attack: Option<usize>,
    pub unique_fields: usize,
    /// Distinct (field, template, attack class) triples.
    pub vulnerabilities_found: usize,
    pub parser_penalty_rate: f64,
    pub attack_rate: f64,
    pub no_attack_rate: f64,
    pub wall_time: f64,
    pub candidates_total: usize,
    pub candidates_submitted: usize,
    pub parse_failures: usize,
    pub attacks: usize,
    pub no_attacks: usize,
    pub duplicates: usize,
    pub episodes: usize,
    pub env_errors: usize,
}

impl MetricsRecord {
    /// Fills the three rates from the counts. The no-attack rate is the
    /// remainder, so the rates sum to exactly 1 whenever any candidate was
    /// generated.
    pub fn set_rates(&mut self) {
        if self.candidates_total == 0 {
            self.parser_penalty_rate = 0.0;
            self.attack_rate = 0.0;
            self.no_attack_rate = 0.0;
            return;
        }
        let n = self.candidates_total as f64;
        self.parser_penalty_rate = self.parse_failures as f64 / n;
        self.attack_rate = self.attacks as f64 / n;
        self.no_attack_rate = 1.0 - (self.parser_penalty_rate + self.attack_rate);
    }

    /// Sets the vulnerability and field counts from the entries.
    pub fn count(&mut self, vulns: &[VulnerabilityEntry]) {
        let triples: BTreeSet<(&str, &str, AttackClass)> = vulns.iter().map(|v| (v.field.as_str(), v.template.as_str(), v.class)).collect();
        let fields: BTreeSet<&str> = vulns.iter().map(|v| v.field.as_str()).collect();
        self.vulnerabilities_found = triples.len();
        self.unique_fields = fields.len();
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VulnerabilityEntry {
    pub field: String,
    pub template: String,
    pub class: AttackClass,
    /// The first payload that showed it.
    pub payload: String,
    pub candidate_index: usize,
    pub episode: usize,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArmPosterior {
    pub dialect: String,
    pub seed: String,
    pub alpha: u64,
    pub beta: u64,
}

/// One line of the event log: a generated candidate and what happened to it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Event {
    pub index: usize,
    pub episode: usize,
    pub step: usize,
    pub point: String,
    pub seed: usize,
    pub action: Option<MutationAction>,
    pub candidate: String,
    pub outcome: Option<RewardKind>,
    pub class: Option<AttackClass>,
    pub reward: f64,
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unsupported report schema {found:?}, expected {REPORT_HEADER:?}")]
    Schema { found: String },
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub metrics: MetricsRecord,
    pub vulnerabilities: Vec<VulnerabilityEntry>,
    pub bandit: Vec<ArmPosterior>,
    pub updates: Vec<UpdateStats>,
    pub points: Vec<String>,
    pub config: CampaignConfig,
}

impl Report {
    /// Header line followed by pretty-printed JSON.
    pub fn render(&self) -> String {
        let body = serde_json::to_string_pretty(self).expect("report serializes");
        format!("{REPORT_HEADER}\n{body}\n")
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let (head, body) = text.split_once('\n').unwrap_or((text, ""));
        if head.trim_end() != REPORT_HEADER {
            return Err(ReportError::Schema { found: head.trim_end().to_string() });
        }
        Ok(serde_json::from_str(body)?)
    }

    /// A copy with every wall-clock field zeroed.
    pub fn without_wall_clock(&self) -> Self {
        let mut r = self.clone();
        r.metrics.wall_time = 0.0;
        r.metrics.time_to_first_attack = r.metrics.time_to_first_attack.map(|_| 0.0);
        for v in &mut r.vulnerabilities {
            v.elapsed_secs = 0.0;
        }
        r
    }

    /// Plain-text metric lines and a vulnerability table.
    pub fn summary(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "candidates: {} generated, {} submitted, {} episodes", m.candidates_total, m.candidates_submitted, m.episodes);
        match (m.time_to_first_attack, m.candidates_to_first_attack) {
            (Some(t), Some(n)) => {
                let _ = writeln!(s, "time to first attack: {t:.2} s (candidate {n})");
            }
            _ => {
                let _ = writeln!(s, "time to first attack: none");
            }
        }
        let _ = writeln!(s, "{} vulnerabilities across {} unique fields", m.vulnerabilities_found, m.unique_fields);
        let _ = writeln!(s, "parser penalty rate: {:.4}", m.parser_penalty_rate);
        let _ = writeln!(s, "attack rate: {:.4}", m.attack_rate);
        let _ = writeln!(s, "no-attack rate: {:.4}", m.no_attack_rate);
        let _ = writeln!(s, "wall time: {:.2} s", m.wall_time);
        if !self.vulnerabilities.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<20} {:<15} {:>9}  payload", "field", "class", "candidate");
            for v in &self.vulnerabilities {
                let _ = writeln!(s, "{:<20} {:<15} {:>9}  {}", v.field, v.class.to_string(), v.candidate_index, v.payload);
            }
        }
        s
    }
}

//! The fuzzing loop: seed selection, mutation episodes, verdicts, shaped
//! rewards, agent and bandit updates, metrics and reports.

mod agents;
mod report;
mod run;
mod seeds;

use std::collections::HashSet;

use thiserror::Error;

use crate::agent::{AgentError, DqnConfig, PpoConfig};
use crate::corpus::CorpusError;
use crate::encoder::{EncoderConfig, EncoderError, PretrainSchedule};
use crate::environment::{EnvError, VictimVerdict};
use crate::grammar::ParseVerdict;

pub use agents::{build_agent, FuzzAgent, GeneratorAgent, Proposal, PpoFuzzer, DqnFuzzer, RandomFuzzer, ScriptedAgent};
pub use report::{ArmPosterior, Event, MetricsRecord, Report, ReportError, VulnerabilityEntry, REPORT_HEADER};
pub use run::{embedded_target, run_campaign, Campaign, CampaignOutcome, EpisodeOutcome};
pub use seeds::{load_pretrained, pretrain, save_pretrained, Pretrained, SeedBank, SeedEntry};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no seeds for {0}")]
    NoSeeds(String),
    #[error("no injection points")]
    NoPoints,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("too many consecutive failed episodes: {0}")]
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub r_attack: f64,
    pub p_parse_fail: f64,
    pub p_no_attack: f64,
    pub p_duplicate: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { r_attack: 1.0, p_parse_fail: -1.0, p_no_attack: -0.05, p_duplicate: -0.5 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        let ok = self.r_attack > 0.0
            && self.p_parse_fail < 0.0
            && self.p_no_attack < 0.0
            && self.p_duplicate < 0.0
            && self.p_no_attack.abs() < self.p_duplicate.abs()
            && self.p_duplicate.abs() <= self.p_parse_fail.abs();
        if ok {
            Ok(())
        } else {
            Err(CampaignError::Config("rewards need r_attack > 0 > penalties and |no_attack| < |duplicate| <= |parse_fail|".into()))
        }
    }
}

/// Which reward branch a candidate fell into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    ParseFail,
    Duplicate,
    Attack,
    NoAttack,
}

/// Classifies a candidate: parse failure first, then duplicate, then the
/// verdict.
pub fn reward_kind(verdict: Option<&VictimVerdict>, parse: &ParseVerdict, duplicate: bool) -> RewardKind {
    if !parse.well_formed {
        RewardKind::ParseFail
    } else if duplicate {
        RewardKind::Duplicate
    } else if verdict.is_some_and(|v| v.attack_success) {
        RewardKind::Attack
    } else {
        RewardKind::NoAttack
    }
}

pub fn assign_reward(verdict: Option<&VictimVerdict>, parse: &ParseVerdict, duplicate: bool, cfg: &RewardConfig) -> f64 {
    match reward_kind(verdict, parse, duplicate) {
        RewardKind::ParseFail => cfg.p_parse_fail,
        RewardKind::Duplicate => cfg.p_duplicate,
        RewardKind::Attack => cfg.r_attack,
        RewardKind::NoAttack => cfg.p_no_attack,
    }
}

/// Candidate strings submitted so far.
#[derive(Debug, Clone, Default)]
pub struct DedupStore {
    seen: HashSet<String>,
}

impl DedupStore {
    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// True when `candidate` was seen before; records it either way.
pub fn dedup_check(candidate: &str, store: &mut DedupStore) -> bool {
    !store.seen.insert(candidate.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Ppo,
    Dqn,
    /// Uniform random mutations.
    Random,
    /// Fresh grammar-generated candidates, no mutation.
    Generator,
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown agent {s:?}"))
    }
}

/// Encoder sizes; the vocabulary size comes from the seed corpus.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let e = EncoderConfig::new(1);
        Self { layers: e.layers, heads: e.heads, d_model: e.d_model, d_ff: e.d_ff, max_len: e.max_len, dropout: e.dropout }
    }
}

impl ModelConfig {
    pub fn encoder(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_len: self.max_len,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    pub agent: AgentKind,
    pub bandit: bool,
    pub pretrain: bool,
    pub shaped_rewards: bool,
    pub max_mutations: usize,
    /// Generated candidates, including those the parser rejects.
    pub max_candidates: usize,
    pub max_episodes: Option<usize>,
    pub timeout_secs: Option<f64>,
    pub stop_on_first_attack: bool,
    pub ngram_threshold: usize,
    pub generator_depth: usize,
    pub rewards: RewardConfig,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub model: ModelConfig,
    pub pretraining: PretrainSchedule,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            agent: AgentKind::Ppo,
            bandit: true,
            pretrain: true,
            shaped_rewards: true,
            max_mutations: 8,
            max_candidates: 5000,
            max_episodes: None,
            timeout_secs: None,
            stop_on_first_attack: false,
            ngram_threshold: crate::corpus::DEFAULT_NGRAM_THRESHOLD,
            generator_depth: 6,
            rewards: RewardConfig::default(),
            ppo: PpoConfig::default(),
            dqn: DqnConfig::default(),
            model: ModelConfig::default(),
            pretraining: PretrainSchedule::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: &str| Err(CampaignError::Config(m.into()));
        if self.max_mutations == 0 {
            return bad("max_mutations must be at least 1");
        }
        if self.max_candidates == 0 && self.max_episodes.is_none() && self.timeout_secs.is_none() {
            return bad("some budget is required");
        }
        if self.timeout_secs.is_some_and(|t| !(t > 0.0)) {
            return bad("timeout_secs must be positive");
        }
        if self.ppo.update_every == 0 || self.ppo.minibatch == 0 || self.ppo.epochs == 0 {
            return bad("ppo update_every, minibatch and epochs must be at least 1");
        }
        self.rewards.validate()?;
        self.model.encoder(8).validate()?;
        Ok(())
    }

    /// The reward actually fed to the agent: shaped, or 1 for an attack and
    /// 0 otherwise when shaping is off.
    pub fn reward(&self, kind: RewardKind) -> f64 {
        if !self.shaped_rewards {
            return f64::from(u8::from(kind == RewardKind::Attack));
        }
        match kind {
            RewardKind::ParseFail => self.rewards.p_parse_fail,
            RewardKind::Duplicate => self.rewards.p_duplicate,
            RewardKind::Attack => self.rewards.r_attack,
            RewardKind::NoAttack => self.rewards.p_no_attack,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::AttackClass;

    fn parse(ok: bool) -> ParseVerdict {
        ParseVerdict { well_formed: ok, failure_position: if ok { None } else { Some(0) }, rule_trace: Vec::new() }
    }

    fn verdict(attack: bool) -> VictimVerdict {
        VictimVerdict {
            parsed_ok: true,
            sanitizer_blocked: false,
            attack_success: attack,
            attack_class: attack.then_some(AttackClass::Tautology),
            field: "a/b".into(),
            template: "t".into(),
            novel: attack,
        }
    }

    #[test]
    fn reward_branches() {
        let c = RewardConfig::default();
        assert_eq!(assign_reward(Some(&verdict(true)), &parse(true), false, &c), 1.0);
        assert_eq!(assign_reward(None, &parse(false), false, &c), -1.0);
        assert_eq!(assign_reward(Some(&verdict(false)), &parse(true), true, &c), -0.5);
        assert_eq!(assign_reward(Some(&verdict(true)), &parse(true), true, &c), -0.5);
        assert_eq!(assign_reward(Some(&verdict(false)), &parse(true), false, &c), -0.05);
    }

    #[test]
    fn dedup_is_exact_match() {
        let mut s = DedupStore::default();
        assert!(!dedup_check("' OR 1 = 1", &mut s));
        assert!(dedup_check("' OR 1 = 1", &mut s));
        assert!(!dedup_check("' OR 1  = 1", &mut s));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn binary_rewards_when_unshaped() {
        let cfg = CampaignConfig { shaped_rewards: false, ..Default::default() };
        assert_eq!(cfg.reward(RewardKind::Attack), 1.0);
        assert_eq!(cfg.reward(RewardKind::ParseFail), 0.0);
        assert_eq!(CampaignConfig::default().reward(RewardKind::ParseFail), -1.0);
    }

    #[test]
    fn config_validation() {
        assert!(CampaignConfig::default().validate().is_ok());
        assert!(CampaignConfig { max_mutations: 0, ..Default::default() }.validate().is_err());
        let mut c = CampaignConfig::default();
        c.rewards.p_no_attack = -0.9;
        assert!(c.validate().is_err());
        assert_eq!("dqn".parse::<AgentKind>(), Ok(AgentKind::Dqn));
        assert!("sarsa".parse::<AgentKind>().is_err());
    }
}

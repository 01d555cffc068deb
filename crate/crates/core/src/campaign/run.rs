use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{ArmPosterior, Event, MetricsRecord, Report, VulnerabilityEntry};
use super::{build_agent, AgentKind, dedup_check, pretrain, reward_kind, CampaignConfig, CampaignError, DedupStore, FuzzAgent, Pretrained, Proposal, RewardKind, SeedBank};
use crate::agent::UpdateStats;
use crate::bandit::{select_seed, update_arm, SeedArm};
use crate::corpus::{concretize, TokenSequence};
use crate::corpus::builtin::{sqli_seeds, xss_seeds};
use crate::environment::{fixture_db, AttackClass, EmbeddedSuite, EnvError, Environment, InjectionPoint};
use crate::grammar::{check, Dialect};
use crate::mutation::apply;

/// Episodes in a row that may fail on environment errors before the
/// campaign gives up.
const MAX_FAILED_EPISODES: usize = 5;

fn slot(d: Dialect) -> usize {
    match d {
        Dialect::SqlFragment => 0,
        Dialect::MarkupScript => 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub point: String,
    /// Index of the seed in the bank.
    pub seed: usize,
    pub rewards: Vec<f64>,
    pub kinds: Vec<RewardKind>,
    pub attack: Option<AttackClass>,
    /// Some attack in the episode was not a resubmitted candidate.
    pub fresh_attack: bool,
    /// Environment error that cut the episode short.
    pub error: Option<String>,
}

/// Mutable state of one fuzzing campaign.
pub struct Campaign {
    cfg: CampaignConfig,
    bank: SeedBank,
    /// Per dialect: bank indices and their arms, in the same order.
    pools: [Vec<usize>; 2],
    arms: [Vec<SeedArm>; 2],
    next_seed: [usize; 2],
    points: Vec<InjectionPoint>,
    next_point: usize,
    env: Environment,
    dedup: DedupStore,
    rng: ChaCha8Rng,
    metrics: MetricsRecord,
    vulns: BTreeMap<(String, String, AttackClass), VulnerabilityEntry>,
    updates: Vec<UpdateStats>,
    events: Option<Box<dyn Write>>,
    started: Instant,
}

impl Campaign {
    pub fn new(cfg: CampaignConfig, bank: SeedBank, points: Vec<InjectionPoint>, env: Environment) -> Result<Self, CampaignError> {
        cfg.validate()?;
        if points.is_empty() {
            return Err(CampaignError::NoPoints);
        }
        let pools = [bank.pool(Dialect::SqlFragment), bank.pool(Dialect::MarkupScript)];
        for p in &points {
            let d = p.context.dialect();
            if pools[slot(d)].is_empty() {
                return Err(CampaignError::NoSeeds(d.to_string()));
            }
        }
        let arms = pools.clone().map(|pool| pool.iter().map(|&i| SeedArm::new(bank.entries[i].seq.clone())).collect());
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            bank,
            pools,
            arms,
            next_seed: [0; 2],
            points,
            next_point: 0,
            env,
            dedup: DedupStore::default(),
            rng,
            metrics: MetricsRecord::default(),
            vulns: BTreeMap::new(),
            updates: Vec::new(),
            events: None,
            started: Instant::now(),
        })
    }

    /// Writes one JSON line per generated candidate to `w`.
    pub fn with_event_log(mut self, w: Box<dyn Write>) -> Self {
        self.events = Some(w);
        self
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.cfg
    }

    pub fn bank(&self) -> &SeedBank {
        &self.bank
    }

    pub fn arms(&self, dialect: Dialect) -> &[SeedArm] {
        &self.arms[slot(dialect)]
    }

    fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    /// True once any budget is spent.
    pub fn exhausted(&self) -> bool {
        let c = &self.cfg;
        (c.max_candidates > 0 && self.metrics.candidates_total >= c.max_candidates)
            || c.max_episodes.is_some_and(|e| self.metrics.episodes >= e)
            || c.timeout_secs.is_some_and(|t| self.elapsed() >= t)
            || (c.stop_on_first_attack && self.metrics.attacks > 0)
    }

    fn log_event(&mut self, e: &Event) -> Result<(), CampaignError> {
        if let Some(w) = self.events.as_mut() {
            serde_json::to_writer(&mut *w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// One episode on the next injection point in round-robin order.
    pub fn run_episode(&mut self, agent: &mut dyn FuzzAgent) -> Result<EpisodeOutcome, CampaignError> {
        let point = self.points[self.next_point % self.points.len()].clone();
        self.next_point += 1;
        let dialect = point.context.dialect();
        let d = slot(dialect);
        let arm = if self.cfg.bandit {
            select_seed(&self.arms[d], &mut self.rng).map_err(|_| CampaignError::NoSeeds(dialect.to_string()))?
        } else {
            let a = self.next_seed[d] % self.arms[d].len();
            self.next_seed[d] += 1;
            a
        };
        let seed_index = self.pools[d][arm];
        let (mut state, reverse) = {
            let e = &self.bank.entries[seed_index];
            (e.seq.clone(), e.reverse.clone())
        };
        self.metrics.episodes += 1;
        let episode = self.metrics.episodes;
        let mut out = EpisodeOutcome { point: point.id(), seed: seed_index, rewards: Vec::new(), kinds: Vec::new(), attack: None, fresh_attack: false, error: None };
        let max_len = agent.max_len();

        for step in 0..self.cfg.max_mutations {
            if self.exhausted() {
                break;
            }
            let proposal = agent.propose(&state, dialect, &self.bank.vocab, &mut self.rng)?;
            let candidate: Option<TokenSequence> = match &proposal {
                Proposal::Mutate { action, .. } => apply(&self.bank.vocab, &state, *action, max_len).ok(),
                Proposal::Generate(seq) => Some(seq.clone()),
            }
            .map(|c| self.bank.vocab.canonicalize(&c))
            .filter(|c| c.len() <= max_len);

            let well_formed = candidate.as_ref().map(|c| check(c, dialect));
            let parse_ok = well_formed.as_ref().is_some_and(|v| v.well_formed);
            let text = match &candidate {
                Some(c) if parse_ok => concretize(&c.detokenize(), &reverse, &self.bank.schema),
                Some(c) => c.detokenize(),
                None => String::new(),
            };
            let mut verdict = None;
            let mut duplicate = false;
            if parse_ok {
                duplicate = dedup_check(&text, &mut self.dedup);
                match self.env.submit(&point, &text) {
                    Ok(v) => verdict = Some(v),
                    Err(e) => {
                        self.metrics.env_errors += 1;
                        let msg = e.to_string();
                        log::warn!("{}: {msg}", point.id());
                        let ev = Event {
                            index: self.metrics.candidates_total,
                            episode,
                            step,
                            point: point.id(),
                            seed: seed_index,
                            action: proposal.action(),
                            candidate: text,
                            outcome: None,
                            class: None,
                            reward: 0.0,
                            error: Some(msg.clone()),
                        };
                        self.log_event(&ev)?;
                        out.error = Some(msg);
                        break;
                    }
                }
            }

            self.metrics.candidates_total += 1;
            let index = self.metrics.candidates_total;
            let parse = well_formed.unwrap_or_else(crate::grammar::ParseVerdict::rejected);
            let kind = reward_kind(verdict.as_ref(), &parse, duplicate);
            let reward = self.cfg.reward(kind);
            let attack = verdict.as_ref().and_then(|v| v.attack_class.filter(|_| v.attack_success));
            if parse_ok {
                self.metrics.candidates_submitted += 1;
            }
            match (parse_ok, attack) {
                (false, _) => self.metrics.parse_failures += 1,
                (true, Some(_)) => self.metrics.attacks += 1,
                (true, None) => self.metrics.no_attacks += 1,
            }
            self.metrics.duplicates += usize::from(duplicate);
            if let (Some(class), Some(v)) = (attack, verdict.as_ref()) {
                if self.metrics.candidates_to_first_attack.is_none() {
                    self.metrics.candidates_to_first_attack = Some(index);
                    self.metrics.time_to_first_attack = Some(self.elapsed());
                }
                let key = (v.field.clone(), v.template.clone(), class);
                if !self.vulns.contains_key(&key) {
                    log::info!("{} {class} at candidate {index}: {text}", v.field);
                    let entry = VulnerabilityEntry {
                        field: v.field.clone(),
                        template: v.template.clone(),
                        class,
                        payload: text.clone(),
                        candidate_index: index,
                        episode,
                        elapsed_secs: self.elapsed(),
                    };
                    self.vulns.insert(key, entry);
                }
            }
            let done = attack.is_some() || step + 1 == self.cfg.max_mutations;
            let next = candidate.unwrap_or_else(|| state.clone());
            agent.observe(&state, &proposal, reward, &next, done, &mut self.rng)?;
            let ev = Event {
                index,
                episode,
                step,
                point: point.id(),
                seed: seed_index,
                action: proposal.action(),
                candidate: text,
                outcome: Some(kind),
                class: attack,
                reward,
                error: None,
            };
            self.log_event(&ev)?;
            out.rewards.push(reward);
            out.kinds.push(kind);
            out.fresh_attack |= kind == RewardKind::Attack;
            state = next;
            if attack.is_some() {
                out.attack = attack;
                break;
            }
        }

        let played = self.arms[d][arm].clone();
        self.arms[d][arm] = update_arm(played, out.fresh_attack);
        if let Some(stats) = agent.end_episode(&mut self.rng)? {
            self.updates.push(stats);
        }
        Ok(out)
    }

    /// Runs episodes until a budget is spent.
    pub fn run(&mut self, agent: &mut dyn FuzzAgent) -> Result<(), CampaignError> {
        let mut failed = 0;
        while !self.exhausted() {
            let out = self.run_episode(agent)?;
            match out.error {
                Some(e) if out.kinds.is_empty() => {
                    failed += 1;
                    if failed >= MAX_FAILED_EPISODES {
                        return Err(CampaignError::Aborted(e));
                    }
                }
                _ => failed = 0,
            }
        }
        if let Some(w) = self.events.as_mut() {
            w.flush()?;
        }
        Ok(())
    }

    pub fn metrics(&self) -> MetricsRecord {
        let mut m = self.metrics.clone();
        m.wall_time = self.elapsed();
        m.set_rates();
        let vulns: Vec<VulnerabilityEntry> = self.vulns.values().cloned().collect();
        m.count(&vulns);
        m
    }

    pub fn report(&self) -> Report {
        let mut vulnerabilities: Vec<VulnerabilityEntry> = self.vulns.values().cloned().collect();
        vulnerabilities.sort_by_key(|v| v.candidate_index);
        let mut bandit = Vec::new();
        for d in Dialect::ALL {
            for (arm, &i) in self.arms[slot(d)].iter().zip(&self.pools[slot(d)]) {
                bandit.push(ArmPosterior { dialect: d.to_string(), seed: self.bank.entries[i].raw.clone(), alpha: arm.alpha, beta: arm.beta });
            }
        }
        Report {
            metrics: self.metrics(),
            vulnerabilities,
            bandit,
            updates: self.updates.clone(),
            points: self.points.iter().map(InjectionPoint::id).collect(),
            config: self.cfg.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutcome {
    pub metrics: MetricsRecord,
    pub report: Report,
}

/// Builds the agent (pretraining first when asked and no checkpoint is
/// given), runs the campaign to budget and returns its metrics and report.
pub fn run_campaign(
    cfg: &CampaignConfig,
    bank: SeedBank,
    points: Vec<InjectionPoint>,
    env: Environment,
    checkpoint: Option<Pretrained>,
    event_log: Option<Box<dyn Write>>,
) -> Result<CampaignOutcome, CampaignError> {
    cfg.validate()?;
    let learns = matches!(cfg.agent, AgentKind::Ppo | AgentKind::Dqn);
    let pretrained = match (cfg.pretrain && learns, checkpoint) {
        (false, Some(_)) => {
            log::warn!("pretraining is off or unused by this agent; ignoring the checkpoint");
            None
        }
        (false, None) => None,
        (true, Some(p)) => Some(p),
        (true, None) => {
            let p = pretrain(&bank, cfg)?;
            if let Some(r) = &p.report {
                log::info!("pretrained: final loss {:.4}", r.epoch_losses.last().copied().unwrap_or(f64::NAN));
            }
            Some(p)
        }
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut agent = build_agent(cfg, &bank, pretrained, &mut init_rng)?;
    let mut campaign = Campaign::new(cfg.clone(), bank, points, env)?;
    if let Some(w) = event_log {
        campaign = campaign.with_event_log(w);
    }
    campaign.run(agent.as_mut())?;
    let report = campaign.report();
    Ok(CampaignOutcome { metrics: report.metrics.clone(), report })
}

/// Built-in seeds over the fixture schema, the injection points of the named
/// embedded apps (every app when `apps` is empty) and an environment over
/// the embedded suite.
pub fn embedded_target(cfg: &CampaignConfig, apps: &[&str]) -> Result<(SeedBank, Vec<InjectionPoint>, Environment), CampaignError> {
    let suite = EmbeddedSuite::new();
    let mut points = Vec::new();
    if apps.is_empty() {
        points = suite.points();
    } else {
        for id in apps {
            let app = suite.app(id).ok_or_else(|| EnvError::UnknownApp(id.to_string()))?;
            points.extend(app.points());
        }
    }
    let bank = SeedBank::build(&sqli_seeds(), &xss_seeds(), fixture_db().schema(), cfg.ngram_threshold)?;
    Ok((bank, points, Environment::new(Box::new(suite))))
}

use std::collections::VecDeque;

use rand::RngCore;

use super::{AgentKind, CampaignConfig, CampaignError, Pretrained, SeedBank};
use crate::agent::{DqnAgent, PolicyNet, PpoAgent, RandomAgent, Transition, UpdateStats};
use crate::corpus::{TokenSequence, Vocab};
use crate::grammar::{generate, Dialect};
use crate::mutation::MutationAction;

/// What an agent wants done with the current state.
#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Mutate { action: MutationAction, log_prob: f64, value: f64 },
    /// A whole new candidate, ignoring the state.
    Generate(TokenSequence),
}

impl Proposal {
    pub fn action(&self) -> Option<MutationAction> {
        match self {
            Proposal::Mutate { action, .. } => Some(*action),
            Proposal::Generate(_) => None,
        }
    }
}

/// The decision-making side of a campaign.
pub trait FuzzAgent {
    fn propose(&mut self, state: &TokenSequence, dialect: Dialect, vocab: &Vocab, rng: &mut dyn RngCore) -> Result<Proposal, CampaignError>;

    /// Called after every step with the reward the step earned.
    fn observe(
        &mut self,
        _state: &TokenSequence,
        _proposal: &Proposal,
        _reward: f64,
        _next: &TokenSequence,
        _done: bool,
        _rng: &mut dyn RngCore,
    ) -> Result<(), CampaignError> {
        Ok(())
    }

    /// Called when an episode ends. Returns the statistics of a policy
    /// update if one ran.
    fn end_episode(&mut self, _rng: &mut dyn RngCore) -> Result<Option<UpdateStats>, CampaignError> {
        Ok(None)
    }

    /// Longest state the agent can read.
    fn max_len(&self) -> usize;
}

pub struct PpoFuzzer {
    pub agent: PpoAgent,
    buffer: Vec<Transition>,
}

impl PpoFuzzer {
    pub fn new(agent: PpoAgent) -> Self {
        Self { agent, buffer: Vec::new() }
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }
}

impl FuzzAgent for PpoFuzzer {
    fn propose(&mut self, state: &TokenSequence, _: Dialect, _: &Vocab, rng: &mut dyn RngCore) -> Result<Proposal, CampaignError> {
        let (action, log_prob, value) = self.agent.net.act(&state.ids(), rng)?;
        Ok(Proposal::Mutate { action, log_prob, value })
    }

    fn observe(&mut self, state: &TokenSequence, p: &Proposal, reward: f64, _: &TokenSequence, done: bool, _: &mut dyn RngCore) -> Result<(), CampaignError> {
        if let Proposal::Mutate { action, log_prob, value } = *p {
            self.buffer.push(Transition { state: state.clone(), action, log_prob, value, reward, done });
        }
        Ok(())
    }

    fn end_episode(&mut self, rng: &mut dyn RngCore) -> Result<Option<UpdateStats>, CampaignError> {
        if let Some(last) = self.buffer.last_mut() {
            last.done = true;
        }
        if self.buffer.len() < self.agent.cfg.update_every {
            return Ok(None);
        }
        let stats = self.agent.update(&self.buffer, rng)?;
        self.buffer.clear();
        log::info!(
            "ppo update {}: policy {:.4} value {:.4} entropy {:.3} clip {:.3}",
            self.agent.updates(),
            stats.policy_loss,
            stats.value_loss,
            stats.entropy,
            stats.clip_fraction
        );
        Ok(Some(stats))
    }

    fn max_len(&self) -> usize {
        self.agent.net.max_len()
    }
}

pub struct DqnFuzzer {
    pub agent: DqnAgent,
}

impl FuzzAgent for DqnFuzzer {
    fn propose(&mut self, state: &TokenSequence, _: Dialect, _: &Vocab, rng: &mut dyn RngCore) -> Result<Proposal, CampaignError> {
        let action = self.agent.act(&state.ids(), rng)?;
        Ok(Proposal::Mutate { action, log_prob: 0.0, value: 0.0 })
    }

    fn observe(&mut self, state: &TokenSequence, p: &Proposal, reward: f64, next: &TokenSequence, done: bool, rng: &mut dyn RngCore) -> Result<(), CampaignError> {
        if let Some(action) = p.action() {
            if let Some(stats) = self.agent.observe(state.ids(), action, reward, next.ids(), done, rng)? {
                log::debug!("dqn loss {:.4}", stats.loss);
            }
        }
        Ok(())
    }

    fn max_len(&self) -> usize {
        self.agent.net.max_len()
    }
}

pub struct RandomFuzzer {
    pub agent: RandomAgent,
    max_len: usize,
}

impl RandomFuzzer {
    pub fn new(vocab_size: usize, max_len: usize) -> Self {
        Self { agent: RandomAgent::new(vocab_size, max_len), max_len }
    }
}

impl FuzzAgent for RandomFuzzer {
    fn propose(&mut self, state: &TokenSequence, _: Dialect, _: &Vocab, rng: &mut dyn RngCore) -> Result<Proposal, CampaignError> {
        let (action, log_prob) = self.agent.act(state.len(), rng);
        Ok(Proposal::Mutate { action, log_prob, value: 0.0 })
    }

    fn max_len(&self) -> usize {
        self.max_len
    }
}

/// Emits grammar-generated candidates of the point's dialect.
pub struct GeneratorAgent {
    pub depth: usize,
    max_len: usize,
}

impl GeneratorAgent {
    pub fn new(depth: usize, max_len: usize) -> Self {
        Self { depth, max_len }
    }
}

impl FuzzAgent for GeneratorAgent {
    fn propose(&mut self, _: &TokenSequence, dialect: Dialect, vocab: &Vocab, rng: &mut dyn RngCore) -> Result<Proposal, CampaignError> {
        Ok(Proposal::Generate(generate(vocab, dialect, rng, self.depth)))
    }

    fn max_len(&self) -> usize {
        self.max_len
    }
}

/// Plays a fixed list of actions in order; fails once the list runs out.
pub struct ScriptedAgent {
    actions: VecDeque<MutationAction>,
    max_len: usize,
    pub rewards: Vec<f64>,
}

impl ScriptedAgent {
    pub fn new(actions: impl IntoIterator<Item = MutationAction>, max_len: usize) -> Self {
        Self { actions: actions.into_iter().collect(), max_len, rewards: Vec::new() }
    }
}

impl FuzzAgent for ScriptedAgent {
    fn propose(&mut self, _: &TokenSequence, _: Dialect, _: &Vocab, _: &mut dyn RngCore) -> Result<Proposal, CampaignError> {
        let action = self.actions.pop_front().ok_or_else(|| CampaignError::Config("script exhausted".into()))?;
        Ok(Proposal::Mutate { action, log_prob: 0.0, value: 0.0 })
    }

    fn observe(&mut self, _: &TokenSequence, _: &Proposal, reward: f64, _: &TokenSequence, _: bool, _: &mut dyn RngCore) -> Result<(), CampaignError> {
        self.rewards.push(reward);
        Ok(())
    }

    fn max_len(&self) -> usize {
        self.max_len
    }
}

/// The agent selected by `cfg.agent`. Learning agents start from
/// `pretrained` when given and from fresh weights otherwise.
pub fn build_agent(
    cfg: &CampaignConfig,
    bank: &SeedBank,
    pretrained: Option<Pretrained>,
    rng: &mut dyn RngCore,
) -> Result<Box<dyn FuzzAgent>, CampaignError> {
    let vocab_size = bank.vocab.len();
    let net = |rng: &mut dyn RngCore| -> Result<PolicyNet, CampaignError> {
        match pretrained {
            Some(p) if p.vocab.len() != vocab_size => Err(CampaignError::Config("checkpoint vocabulary differs from the seed bank's".into())),
            Some(p) => Ok(PolicyNet::from_mlm(p.model, rng)),
            None => Ok(PolicyNet::new(cfg.model.encoder(vocab_size), rng)?),
        }
    };
    Ok(match cfg.agent {
        AgentKind::Ppo => Box::new(PpoFuzzer::new(PpoAgent::new(net(rng)?, cfg.ppo.clone()))),
        AgentKind::Dqn => Box::new(DqnFuzzer { agent: DqnAgent::new(net(rng)?, cfg.dqn.clone()) }),
        AgentKind::Random => Box::new(RandomFuzzer::new(vocab_size, cfg.model.max_len)),
        AgentKind::Generator => Box::new(GeneratorAgent::new(cfg.generator_depth, cfg.model.max_len)),
    })
}

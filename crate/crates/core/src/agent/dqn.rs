use std::collections::VecDeque;

use rand::Rng;

use super::{AgentError, PolicyNet, RandomAgent};
use crate::encoder::{Adam, Graph, Mat};
use crate::mutation::MutationAction;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps over which epsilon decays linearly.
    pub epsilon_decay: u64,
    pub buffer: usize,
    pub batch: usize,
    pub warmup: usize,
    pub train_every: u64,
    pub target_sync: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 2000,
            buffer: 10_000,
            batch: 32,
            warmup: 64,
            train_every: 4,
            target_sync: 250,
        }
    }
}

#[derive(Debug, Clone)]
struct Stored {
    state: Vec<usize>,
    action: MutationAction,
    reward: f64,
    next: Vec<usize>,
    done: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DqnStats {
    pub loss: f64,
    pub epsilon: f64,
}

/// Epsilon-greedy Q-learning over the same network, reading the op,
/// position and token scores as additive action values.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub net: PolicyNet,
    pub cfg: DqnConfig,
    target: PolicyNet,
    opt: Adam,
    replay: VecDeque<Stored>,
    steps: u64,
}

impl DqnAgent {
    pub fn new(net: PolicyNet, cfg: DqnConfig) -> Self {
        let ids: Vec<_> = net.store.ids().collect();
        let opt = Adam::new(ids, cfg.lr);
        Self { target: net.clone(), net, cfg, opt, replay: VecDeque::new(), steps: 0 }
    }

    pub fn epsilon(&self) -> f64 {
        let frac = (self.steps as f64 / self.cfg.epsilon_decay.max(1) as f64).min(1.0);
        self.cfg.epsilon_start + frac * (self.cfg.epsilon_end - self.cfg.epsilon_start)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[usize], rng: &mut R) -> Result<MutationAction, AgentError> {
        if rng.random_bool(self.epsilon().clamp(0.0, 1.0)) {
            let random = RandomAgent::new(self.net.vocab_size(), self.net.max_len());
            return Ok(random.act(state.len(), rng).0);
        }
        Ok(self.net.greedy(state)?.0)
    }

    /// Stores a transition and, on schedule, trains on a replay minibatch.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        state: Vec<usize>,
        action: MutationAction,
        reward: f64,
        next: Vec<usize>,
        done: bool,
        rng: &mut R,
    ) -> Result<Option<DqnStats>, AgentError> {
        if self.replay.len() == self.cfg.buffer {
            self.replay.pop_front();
        }
        self.replay.push_back(Stored { state, action, reward, next, done });
        self.steps += 1;
        let mut out = None;
        if self.replay.len() >= self.cfg.warmup.max(1) && self.steps % self.cfg.train_every.max(1) == 0 {
            out = Some(self.train(rng)?);
        }
        if self.steps % self.cfg.target_sync.max(1) == 0 {
            self.target = self.net.clone();
        }
        Ok(out)
    }

    fn train<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<DqnStats, AgentError> {
        let picks: Vec<usize> = (0..self.cfg.batch.max(1)).map(|_| rng.random_range(0..self.replay.len())).collect();
        let mut targets = Vec::with_capacity(picks.len());
        for &i in &picks {
            let s = &self.replay[i];
            let boot = if s.done { 0.0 } else { self.target.greedy(&s.next)?.1 };
            targets.push(s.reward + self.cfg.gamma * boot);
        }
        let states: Vec<&[usize]> = picks.iter().map(|&i| self.replay[i].state.as_slice()).collect();
        let actions: Vec<MutationAction> = picks.iter().map(|&i| self.replay[i].action).collect();
        let (loss, grads) = {
            let mut g = Graph::new(&self.net.store);
            let q = self.net.action_scores(&mut g, &states, &actions)?;
            let y = g.constant(Mat::from_shape_fn((picks.len(), 1), |(i, _)| targets[i]));
            let err = g.sub(q, y);
            let sq = g.mul(err, err);
            let loss = g.mean_all(sq);
            (g.scalar(loss), g.backward(loss))
        };
        if !loss.is_finite() || !grads.all_finite() {
            return Err(AgentError::NonFinite);
        }
        self.opt.step(&mut self.net.store, &grads);
        Ok(DqnStats { loss, epsilon: self.epsilon() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn epsilon_decays_linearly_to_floor() {
        let net = PolicyNet::new(EncoderConfig::tiny(10), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cfg = DqnConfig { epsilon_decay: 10, warmup: 1000, ..DqnConfig::default() };
        let mut agent = DqnAgent::new(net, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(agent.epsilon(), 1.0);
        for _ in 0..5 {
            agent.observe(vec![5], MutationAction::replace(0, 6), 0.0, vec![6], false, &mut rng).unwrap();
        }
        assert!((agent.epsilon() - 0.525).abs() < 1e-12);
        for _ in 0..20 {
            agent.observe(vec![5], MutationAction::replace(0, 6), 0.0, vec![6], false, &mut rng).unwrap();
        }
        assert!((agent.epsilon() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn greedy_action_value_matches_scored_action() {
        let net = PolicyNet::new(EncoderConfig::tiny(10), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let state = [5, 6, 7];
        let (a, q) = net.greedy(&state).unwrap();
        let mut g = Graph::new(&net.store);
        let s = net.action_scores(&mut g, &[&state], &[a]).unwrap();
        assert!((g.scalar(s) - q).abs() < 1e-9);
    }
}

use rand::seq::SliceRandom;
use rand::Rng;

use super::{AgentError, PolicyNet};
use crate::corpus::TokenSequence;
use crate::encoder::{Adam, Grads, Graph, Mat, Var};
use crate::mutation::MutationAction;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub clip_eps: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Transitions collected between updates.
    pub update_every: usize,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            policy_lr: 3e-5,
            value_lr: 1e-3,
            clip_eps: 0.2,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch: 64,
            entropy_coef: 0.01,
            value_coef: 0.5,
            update_every: 512,
            max_grad_norm: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: TokenSequence,
    pub action: MutationAction,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    /// Value targets: advantages plus the stored values.
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation over consecutive transitions. An
/// episode boundary is any transition with `done`; the final transition is
/// treated as terminal whether or not it is marked.
pub fn compute_advantages(traj: &[Transition], gamma: f64, lambda: f64) -> Advantages {
    let n = traj.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let tr = &traj[t];
        let terminal = tr.done || t + 1 == n;
        let next_value = if terminal { 0.0 } else { traj[t + 1].value };
        let carry = if terminal { 0.0 } else { next_adv };
        let delta = tr.reward + gamma * next_value - tr.value;
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    let returns = adv.iter().zip(traj).map(|(a, t)| a + t.value).collect();
    Advantages { advantages: adv, returns }
}

/// Zero mean, unit variance; batches of one are left unchanged.
pub fn normalize(xs: &[f64]) -> Vec<f64> {
    if xs.len() < 2 {
        return xs.to_vec();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    xs.iter().map(|x| (x - mean) / sd).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Share of samples whose probability ratio left `[1 - eps, 1 + eps]`.
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub minibatches: usize,
}

pub(crate) struct LossParts {
    pub total: Var,
    pub policy: Var,
    pub value: Var,
    pub entropy: Var,
    pub ratio: Var,
}

fn loss_parts(
    g: &mut Graph,
    net: &PolicyNet,
    batch: &[&Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
) -> Result<LossParts, AgentError> {
    let ids: Vec<Vec<usize>> = batch.iter().map(|t| t.state.ids()).collect();
    let refs: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
    let actions: Vec<MutationAction> = batch.iter().map(|t| t.action).collect();
    let terms = net.action_terms(g, &refs, &actions)?;
    let b = batch.len();
    let old = g.constant(Mat::from_shape_fn((b, 1), |(i, _)| batch[i].log_prob));
    let adv = g.constant(Mat::from_shape_fn((b, 1), |(i, _)| advantages[i]));
    let ret = g.constant(Mat::from_shape_fn((b, 1), |(i, _)| returns[i]));

    let diff = g.sub(terms.logp, old);
    let ratio = g.exp(diff);
    let s1 = g.mul(ratio, adv);
    let clipped = g.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let s2 = g.mul(clipped, adv);
    let surr = g.minimum(s1, s2);
    let surr = g.mean_all(surr);
    let policy = g.scale(surr, -1.0);
    let entropy = g.mean_all(terms.entropy);
    let err = g.sub(terms.value, ret);
    let sq = g.mul(err, err);
    let value = g.mean_all(sq);

    let ent_term = g.scale(entropy, -cfg.entropy_coef);
    let pi = g.add(policy, ent_term);
    let v = g.scale(value, cfg.value_coef);
    let total = g.add(pi, v);
    Ok(LossParts { total, policy, value, entropy, ratio })
}

/// The combined PPO objective (clipped surrogate, entropy bonus, value
/// error) for one minibatch, as a scalar.
pub fn ppo_total_loss(
    net: &PolicyNet,
    batch: &[&Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
) -> Result<(f64, Grads), AgentError> {
    let mut g = Graph::new(&net.store);
    let parts = loss_parts(&mut g, net, batch, advantages, returns, cfg)?;
    let loss = g.scalar(parts.total);
    Ok((loss, g.backward(parts.total)))
}

/// PPO learner: the network plus one optimizer for the policy side
/// (encoder, MLM head, policy heads) and one for the value head.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub net: PolicyNet,
    pub cfg: PpoConfig,
    policy_opt: Adam,
    value_opt: Adam,
    updates: u64,
}

impl PpoAgent {
    pub fn new(net: PolicyNet, cfg: PpoConfig) -> Self {
        let policy_opt = Adam::new(net.policy_params(), cfg.policy_lr);
        let value_opt = Adam::new(net.value_params(), cfg.value_lr);
        Self { net, cfg, policy_opt, value_opt, updates: 0 }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Runs `epochs` passes of shuffled minibatches over the buffer.
    /// Non-finite losses or gradients abort the update before any parameter
    /// of the offending step changes.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &[Transition], rng: &mut R) -> Result<UpdateStats, AgentError> {
        if buffer.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let adv = compute_advantages(buffer, self.cfg.gamma, self.cfg.gae_lambda);
        let norm = normalize(&adv.advantages);
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        let mut stats = UpdateStats::default();
        let mut clipped = 0usize;
        let mut seen = 0usize;
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.minibatch.max(1)) {
                let batch: Vec<&Transition> = chunk.iter().map(|&i| &buffer[i]).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| norm[i]).collect();
                let r: Vec<f64> = chunk.iter().map(|&i| adv.returns[i]).collect();
                let mut grads = {
                    let mut g = Graph::new(&self.net.store);
                    let parts = loss_parts(&mut g, &self.net, &batch, &a, &r, &self.cfg)?;
                    if !g.scalar(parts.total).is_finite() {
                        return Err(AgentError::NonFinite);
                    }
                    stats.policy_loss += g.scalar(parts.policy);
                    stats.value_loss += g.scalar(parts.value);
                    stats.entropy += g.scalar(parts.entropy);
                    for &ratio in g.value(parts.ratio).iter() {
                        if (ratio - 1.0).abs() > self.cfg.clip_eps {
                            clipped += 1;
                        }
                        stats.approx_kl -= ratio.ln();
                    }
                    seen += batch.len();
                    g.backward(parts.total)
                };
                if !grads.all_finite() {
                    return Err(AgentError::NonFinite);
                }
                let norm = grads.global_norm();
                if self.cfg.max_grad_norm > 0.0 && norm > self.cfg.max_grad_norm {
                    grads.scale(self.cfg.max_grad_norm / norm);
                }
                self.policy_opt.step(&mut self.net.store, &grads);
                self.value_opt.step(&mut self.net.store, &grads);
                stats.minibatches += 1;
            }
        }
        let m = stats.minibatches as f64;
        stats.policy_loss /= m;
        stats.value_loss /= m;
        stats.entropy /= m;
        stats.clip_fraction = clipped as f64 / seen as f64;
        stats.approx_kl /= seen as f64;
        self.updates += 1;
        if !self.net.store.all_finite() {
            return Err(AgentError::NonFinite);
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Origin, Token};
    use crate::encoder::EncoderConfig;
    use crate::mutation::MutationOp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(reward: f64, value: f64, done: bool) -> Transition {
        let tok = Token { id: 5, surface: "x".into(), spaced: false };
        Transition {
            state: TokenSequence::new(vec![tok], Origin::Seed).unwrap(),
            action: MutationAction::replace(0, 5),
            log_prob: 0.0,
            value,
            reward,
            done,
        }
    }

    #[test]
    fn single_transition_advantage_is_reward_minus_value() {
        let a = compute_advantages(&[tr(1.0, 0.3, true)], 0.99, 0.95);
        assert!((a.advantages[0] - 0.7).abs() < 1e-12);
        assert_eq!(normalize(&a.advantages), a.advantages);
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let t = [tr(0.5, 0.2, false), tr(-0.1, 0.4, false), tr(1.0, 0.1, true)];
        let a = compute_advantages(&t, 0.9, 0.0);
        let expect = [0.5 + 0.9 * 0.4 - 0.2, -0.1 + 0.9 * 0.1 - 0.4, 1.0 - 0.1];
        for (x, y) in a.advantages.iter().zip(expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_one_gamma_one_is_monte_carlo() {
        let t = [tr(0.5, 0.2, false), tr(-0.1, 0.4, false), tr(1.0, 0.1, true), tr(2.0, 0.7, true)];
        let a = compute_advantages(&t, 1.0, 1.0);
        let expect = [1.4 - 0.2, 0.9 - 0.4, 1.0 - 0.1, 2.0 - 0.7];
        for (x, y) in a.advantages.iter().zip(expect) {
            assert!((x - y).abs() < 1e-12);
        }
        for (i, r) in a.returns.iter().enumerate() {
            assert!((r - (expect[i] + t[i].value)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_ratio_with_positive_advantage_is_clipped() {
        let net = PolicyNet::new(EncoderConfig::tiny(10), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut t = tr(0.0, 0.0, true);
        let out = net.policy(&t.state.ids()).unwrap();
        let tok = net.token_distribution(&t.state.ids(), MutationOp::Replace, 0).unwrap();
        let logp = out.op[2].ln() + out.position[2][0].ln() + tok[5].ln();
        t.log_prob = logp - 10f64.ln();
        let cfg = PpoConfig { entropy_coef: 0.0, value_coef: 0.0, ..PpoConfig::default() };
        let (loss, _) = ppo_total_loss(&net, &[&t], &[2.0], &[0.0], &cfg).unwrap();
        assert!((loss + 1.2 * 2.0).abs() < 1e-9);
    }

    #[test]
    fn update_rejects_empty_buffer() {
        let net = PolicyNet::new(EncoderConfig::tiny(10), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut agent = PpoAgent::new(net, PpoConfig::default());
        assert!(matches!(agent.update(&[], &mut ChaCha8Rng::seed_from_u64(0)), Err(AgentError::EmptyBatch)));
    }
}

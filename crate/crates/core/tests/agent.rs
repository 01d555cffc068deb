mod common;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlfuzz::agent::{compute_advantages, normalize, ppo_total_loss, sample_action, PolicyNet, PpoAgent, PpoConfig, Transition};
use rlfuzz::corpus::{Origin, Token, TokenSequence};
use rlfuzz::encoder::EncoderConfig;
use rlfuzz::mutation::{MutationAction, MutationOp};

fn seq(ids: &[u32]) -> TokenSequence {
    let tokens = ids.iter().map(|&id| Token { id, surface: format!("t{id}"), spaced: true }).collect();
    TokenSequence::new(tokens, Origin::Seed).unwrap()
}

fn net(vocab: usize, seed: u64) -> PolicyNet {
    PolicyNet::new(EncoderConfig::tiny(vocab), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn sampled_frequencies_match_the_policy() {
    let net = net(12, 3);
    let state = vec![5, 6, 7, 8];
    let out = net.policy(&state).unwrap();
    let mut cache: HashMap<(MutationOp, usize), Vec<f64>> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10_000;
    let mut ops = [0usize; 3];
    let mut replace_pos = vec![0usize; 4];
    let mut replace_count = 0;
    for _ in 0..n {
        let (a, lp) = sample_action(
            &out,
            |op, p| Ok(cache.entry((op, p)).or_insert_with(|| net.token_distribution(&state, op, p).unwrap()).clone()),
            &mut rng,
        )
        .unwrap();
        ops[a.op.index()] += 1;
        if a.op == MutationOp::Replace {
            replace_pos[a.position] += 1;
            replace_count += 1;
        }
        let mut expect = out.op[a.op.index()].ln() + out.position[a.op.index()][a.position].ln();
        if a.op != MutationOp::Delete {
            expect += cache[&(a.op, a.position)][a.token as usize].ln();
        }
        assert_eq!(lp, expect);
    }
    for op in MutationOp::ALL {
        let freq = ops[op.index()] as f64 / n as f64;
        assert!((freq - out.op[op.index()]).abs() < 0.02, "{op}: {freq} vs {}", out.op[op.index()]);
    }
    for (p, &c) in replace_pos.iter().enumerate() {
        let freq = c as f64 / replace_count as f64;
        assert!((freq - out.position[2][p]).abs() < 0.02);
    }
}

#[test]
fn ppo_loss_gradient_matches_finite_differences() {
    let cfg = EncoderConfig::tiny(10);
    let mut net = PolicyNet::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let actions = [MutationAction::insert(1, 7), MutationAction::delete(2), MutationAction::replace(0, 9), MutationAction::replace(1, 3)];
    let states = [seq(&[5, 6]), seq(&[5, 6, 7]), seq(&[8]), seq(&[9, 9, 4])];
    // ratios of 0.95 and 1.1 stay inside the clip range, 3.0 is clipped
    let offsets = [-(0.95f64.ln()), -(1.1f64.ln()), -(3.0f64.ln()), 0.0];
    let mut batch = Vec::new();
    for i in 0..4 {
        let ids = states[i].ids();
        let out = net.policy(&ids).unwrap();
        let a = actions[i];
        let mut lp = out.op[a.op.index()].ln() + out.position[a.op.index()][a.position].ln();
        if a.op != MutationOp::Delete {
            lp += net.token_distribution(&ids, a.op, a.position).unwrap()[a.token as usize].ln();
        }
        batch.push(Transition { state: states[i].clone(), action: a, log_prob: lp + offsets[i], value: 0.1, reward: 0.5, done: i % 2 == 1 });
    }
    let adv = compute_advantages(&batch, 0.99, 0.95);
    let norm = normalize(&adv.advantages);
    let refs: Vec<&Transition> = batch.iter().collect();
    let ppo = PpoConfig::default();
    let (_, grads) = ppo_total_loss(&net, &refs, &norm, &adv.returns, &ppo).unwrap();
    let (err, name) = common::max_gradient_error(&mut net.store, &grads, 1e-5, |store| {
        let probe = PolicyNet::attach(cfg.clone(), store.clone()).unwrap();
        ppo_total_loss(&probe, &refs, &norm, &adv.returns, &ppo).unwrap().0
    });
    assert!(err <= 1e-4, "{name}: {err}");
}

#[test]
fn single_rewarding_action_is_learned() {
    let net = net(12, 11);
    let cfg = PpoConfig { policy_lr: 1e-3, update_every: 64, ..PpoConfig::default() };
    let mut agent = PpoAgent::new(net, cfg);
    let state = seq(&[5, 6, 7]);
    let ids = state.ids();
    let target = MutationAction::replace(1, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let prob = |agent: &PpoAgent| {
        let out = agent.net.policy(&ids).unwrap();
        out.op[2] * out.position[2][1] * agent.net.token_distribution(&ids, MutationOp::Replace, 1).unwrap()[9]
    };
    let mut learned = None;
    for update in 0..500 {
        let mut buffer = Vec::new();
        for _ in 0..agent.cfg.update_every {
            let (a, lp, v) = agent.net.act(&ids, &mut rng).unwrap();
            let reward = if a == target { 1.0 } else { 0.0 };
            buffer.push(Transition { state: state.clone(), action: a, log_prob: lp, value: v, reward, done: true });
        }
        let stats = agent.update(&buffer, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&stats.clip_fraction));
        if prob(&agent) > 0.9 {
            learned = Some(update);
            break;
        }
    }
    assert!(learned.is_some(), "final probability {}", prob(&agent));
}

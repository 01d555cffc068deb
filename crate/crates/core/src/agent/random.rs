use rand::Rng;

use crate::corpus::{MASK_ID, PAD_ID, UNK_ID};
use crate::mutation::{MutationAction, MutationOp};

/// Uniform over every legal (op, position, token) action, tokens drawn from
/// the non-reserved ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomAgent {
    pub vocab_size: usize,
    pub max_len: usize,
}

impl RandomAgent {
    pub fn new(vocab_size: usize, max_len: usize) -> Self {
        Self { vocab_size, max_len }
    }

    fn token_choices(&self) -> usize {
        self.vocab_size - [PAD_ID, MASK_ID, UNK_ID].iter().filter(|&&t| (t as usize) < self.vocab_size).count()
    }

    /// Number of legal actions of each op on a state of `len` tokens.
    fn counts(&self, len: usize) -> [(MutationOp, usize); 3] {
        let n = self.token_choices();
        MutationOp::ALL.map(|op| {
            let c = match op {
                MutationOp::Insert if len >= self.max_len => 0,
                MutationOp::Delete if len <= 1 => 0,
                MutationOp::Delete => len,
                _ => op.slots(len) * n,
            };
            (op, c)
        })
    }

    /// Samples an action for a state of `len` tokens; returns it with its
    /// log-probability.
    pub fn act<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (MutationAction, f64) {
        let counts = self.counts(len);
        let total: usize = counts.iter().map(|c| c.1).sum();
        let mut k = rng.random_range(0..total);
        let logp = -(total as f64).ln();
        for (op, c) in counts {
            if k >= c {
                k -= c;
                continue;
            }
            if op == MutationOp::Delete {
                return (MutationAction::delete(k), logp);
            }
            let n = self.token_choices();
            let mut token = (k % n) as u32;
            for reserved in [PAD_ID, MASK_ID, UNK_ID] {
                if token >= reserved {
                    token += 1;
                }
            }
            return (MutationAction { op, position: k / n, token }, logp);
        }
        unreachable!("k < total")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn actions_are_legal_and_skip_reserved_tokens() {
        let agent = RandomAgent::new(20, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in 1..=5 {
            for _ in 0..500 {
                let (a, lp) = agent.act(len, &mut rng);
                assert!(a.position < a.op.slots(len));
                assert!(!(a.op == MutationOp::Insert && len == 5));
                assert!(!(a.op == MutationOp::Delete && len == 1));
                if a.op != MutationOp::Delete {
                    assert!(a.token >= 3 && (a.token as usize) < 20);
                }
                assert!(lp < 0.0);
            }
        }
    }

    #[test]
    fn every_legal_action_is_equally_likely() {
        let agent = RandomAgent::new(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let legal = crate::mutation::enumerate_actions(2, 6, 3)
            .into_iter()
            .filter(|a| a.op == MutationOp::Delete || a.token > 2)
            .count();
        let mut seen = std::collections::HashMap::new();
        let n = 30_000;
        for _ in 0..n {
            let (a, lp) = agent.act(2, &mut rng);
            assert!((lp + (legal as f64).ln()).abs() < 1e-12);
            *seen.entry(a).or_insert(0usize) += 1;
        }
        assert_eq!(seen.len(), legal);
        let expected = n as f64 / legal as f64;
        assert!(seen.values().all(|&c| (c as f64 - expected).abs() < 0.25 * expected));
    }
}

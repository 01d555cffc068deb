//! Thompson-sampling seed selection over Beta-Bernoulli arms.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use thiserror::Error;

use crate::corpus::TokenSequence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BanditError {
    #[error("seed pool is empty")]
    EmptyPool,
}

/// A seed payload with its success posterior `Beta(alpha, beta)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedArm {
    pub seed: TokenSequence,
    pub alpha: u64,
    pub beta: u64,
}

impl SeedArm {
    pub fn new(seed: TokenSequence) -> Self {
        Self { seed, alpha: 1, beta: 1 }
    }

    pub fn plays(&self) -> u64 {
        self.alpha + self.beta - 2
    }

    pub fn mean(&self) -> f64 {
        self.alpha as f64 / (self.alpha + self.beta) as f64
    }
}

/// Draws one posterior sample per arm and returns the index of the largest
/// (lowest index on ties).
pub fn select_seed<R: Rng + ?Sized>(pool: &[SeedArm], rng: &mut R) -> Result<usize, BanditError> {
    let mut best = None::<(usize, f64)>;
    for (i, arm) in pool.iter().enumerate() {
        let theta = Beta::new(arm.alpha as f64, arm.beta as f64).expect("alpha, beta >= 1").sample(rng);
        if best.is_none_or(|(_, b)| theta > b) {
            best = Some((i, theta));
        }
    }
    best.map(|(i, _)| i).ok_or(BanditError::EmptyPool)
}

pub fn update_arm(mut arm: SeedArm, success: bool) -> SeedArm {
    if success {
        arm.alpha += 1;
    } else {
        arm.beta += 1;
    }
    arm
}

//! Mutation policies: the actor-critic network trained with PPO, a
//! value-based (DQN) alternative, and a uniform random baseline.

mod dqn;
mod policy;
mod ppo;
mod random;

use thiserror::Error;

use crate::encoder::EncoderError;

pub use dqn::{DqnAgent, DqnConfig, DqnStats};
pub use policy::{sample_action, sample_categorical, PolicyNet, PolicyOutput};
pub use ppo::{compute_advantages, normalize, ppo_total_loss, Advantages, PpoAgent, PpoConfig, Transition, UpdateStats};
pub use random::RandomAgent;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("action is not legal in this state")]
    InvalidAction,
    #[error("non-finite loss or gradient during update")]
    NonFinite,
    #[error("empty batch")]
    EmptyBatch,
}

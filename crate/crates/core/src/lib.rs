//! Grammar-adhering mutation fuzzer for web injection vulnerabilities.
//!
//! A small transformer encoder is pretrained on seed attack payloads with a
//! masked-language-model objective, then fine-tuned as a PPO actor-critic that
//! proposes token-level edits. A Thompson-sampling bandit picks the seed each
//! episode starts from, and an embedded set of victim applications scores the
//! resulting candidates.

pub mod corpus;
pub mod grammar;
pub mod encoder;
pub mod mutation;
pub mod agent;
pub mod bandit;
pub mod environment;
pub mod campaign;
pub mod config;

//! Transformer encoder, masked-language-model pretraining, and the
//! reverse-mode autodiff they are built on.

pub mod autograd;
mod adam;
mod checkpoint;
mod mlm;
mod model;

use thiserror::Error;

pub use adam::Adam;
pub use autograd::{Grads, Graph, Mat, ParamId, ParamStore, Var};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use mlm::{continue_pretraining, mask_batch, masked_accuracy, mlm_loss, mlm_pretrain, MlmBatch, MlmHead, MlmModel, PretrainReport, PretrainSchedule};
pub use model::{Encoded, Encoder, EncoderConfig};
pub(crate) use model::normal_mat;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("sequence of {len} tokens exceeds the limit of {max}")]
    LengthOverflow { len: usize, max: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no positions were masked")]
    EmptyMaskSet,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("non-finite loss or gradient")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

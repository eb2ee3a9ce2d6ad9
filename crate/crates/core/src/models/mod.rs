//! Desk-scale model substrate: a tiny autoregressive policy with exact
//! log-probabilities, a scalar reward model sharing its backbone, JSON
//! checkpoints and a finite-difference gradient checker.

mod checkpoint;
mod gradcheck;
mod network;
mod policy;
mod reward;
mod vocab;

use thiserror::Error;

pub use checkpoint::{Checkpoint, ModelKind, FORMAT_VERSION};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use network::{Architecture, MAX_SEQ_LEN};
pub use policy::{PolicyModel, Rollout};
pub use reward::RewardModel;
pub use vocab::{split_words, TokenId, Vocabulary, BOS, EOS, PAD, UNK};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("token id {0} is not in the vocabulary")]
    UnknownToken(TokenId),
    #[error("sequence of {len} tokens exceeds the limit of {max}")]
    PromptTooLong { len: usize, max: usize },
    #[error("prompt must contain at least one token")]
    EmptyPrompt,
    #[error("models do not share a vocabulary")]
    VocabularyMismatch,
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! The three training stages: supervised fine-tuning, pairwise ranking of
//! the reward model, and ReMax reinforcement learning.

mod config;
mod optim;
mod ranking;
mod report;
mod rl;
mod sft;

use thiserror::Error;

pub use config::{OptimizerKind, RlConfig, RmConfig, Schedule, SftConfig};
pub use optim::Optimizer;
pub use ranking::{
    neg_log_sigmoid, preference_examples, ranking_accuracy, ranking_loss, ranking_loss_from_margins, ranking_loss_grad,
    train_reward_model, PreferenceExample,
};
pub use report::{StepLog, TrainReport};
pub use rl::{
    accumulate_surrogate, enumerate_responses, exact_token_kl, greedy_grouped_rollout, grouped_rollout, kl_divergence,
    remax_sample_estimate, remax_step, rl_train, rollout_value, scenario_reward, QualityScorer, RemaxStep,
    RolloutValue, ScenarioStats, TokenScenario, MAX_MEAN_ABS_ADVANTAGE,
};
pub use sft::{ift_target_text, sft_examples, sft_loss, sft_nll, sft_train, SftExample};

use crate::fairness::FairnessError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("training data is empty")]
    EmptyDataset,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("loss or gradient is not finite")]
    NonFiniteLoss,
    #[error("diverged at step {step}: mean |advantage| {mean_abs_advantage:.3e}")]
    Divergence { step: usize, mean_abs_advantage: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

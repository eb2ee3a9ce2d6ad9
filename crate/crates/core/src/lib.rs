//! Age-group fairness reward for RLHF at desk scale.
//!
//! The crate covers dataset construction, a tiny autoregressive policy and
//! reward model, the three training stages (supervised fine-tuning,
//! pairwise ranking, ReMax reinforcement learning with a group-fairness
//! reward) and bias evaluation.

pub mod datasets;
pub mod eval;
pub mod fairness;
pub mod models;
pub mod training;

pub use fairness::{
    agr_reward, classify_age, fairness_gap, fairness_gate, pairwise_disparity, total_disparity, AgeGroup,
    FairnessError, GroupQualityVector, GroupedScenario, PerGroup, QualityAnnotation, RewardConfig,
};

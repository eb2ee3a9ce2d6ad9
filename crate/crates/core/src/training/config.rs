use serde::{Deserialize, Serialize};

use super::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient steps.
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Half-cosine decay from the base rate towards zero over the run.
    #[default]
    Cosine,
}

impl Schedule {
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

fn check_common(stage: &str, lr: f64, batch: usize, epochs: usize) -> Result<(), TrainingError> {
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(TrainingError::InvalidConfig(format!("{stage}.learning_rate must be >= 0")));
    }
    if batch == 0 {
        return Err(TrainingError::InvalidConfig(format!("{stage}.batch_size must be >= 1")));
    }
    if epochs == 0 {
        return Err(TrainingError::InvalidConfig(format!("{stage}.epochs must be >= 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    /// Set by the caller, never read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self { learning_rate: 5e-5, batch_size: 8, epochs: 3, optimizer: OptimizerKind::Sgd, seed: 0 }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        check_common("sft", self.learning_rate, self.batch_size, self.epochs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RmConfig {
    fn default() -> Self {
        Self { learning_rate: 3e-4, batch_size: 8, epochs: 1, optimizer: OptimizerKind::Sgd, seed: 0 }
    }
}

impl RmConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        check_common("rm", self.learning_rate, self.batch_size, self.epochs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub learning_rate: f64,
    /// Scenarios per update.
    pub batch_size: usize,
    pub epochs: usize,
    /// KL penalty coefficient.
    pub beta: f64,
    /// Fairness coefficient; config files carry it as `reward.lambda`.
    #[serde(skip)]
    pub lambda: f64,
    pub schedule: Schedule,
    pub optimizer: OptimizerKind,
    pub max_new_tokens: usize,
    pub max_len: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-6,
            batch_size: 2,
            epochs: 1,
            beta: 0.1,
            lambda: crate::fairness::RewardConfig::ABMA_LAMBDA,
            schedule: Schedule::Cosine,
            optimizer: OptimizerKind::Sgd,
            max_new_tokens: 48,
            max_len: crate::models::MAX_SEQ_LEN,
            seed: 0,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        check_common("rl", self.learning_rate, self.batch_size, self.epochs)?;
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(TrainingError::InvalidConfig("rl.beta must be > 0".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(TrainingError::InvalidConfig("rl.lambda must be >= 0".into()));
        }
        if self.max_len == 0 || self.max_len > crate::models::MAX_SEQ_LEN {
            return Err(TrainingError::InvalidConfig("rl.max_len must lie in 1..=512".into()));
        }
        Ok(())
    }

    pub fn reward(&self) -> crate::fairness::RewardConfig {
        crate::fairness::RewardConfig::new(self.lambda).expect("validated lambda")
    }
}

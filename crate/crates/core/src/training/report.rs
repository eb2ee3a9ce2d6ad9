use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub learning_rate: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_d_total: Option<f64>,
}

impl StepLog {
    pub fn loss(step: usize, learning_rate: f64, loss: f64) -> Self {
        Self { step, learning_rate, loss, mean_reward: None, mean_baseline: None, mean_kl: None, mean_d_total: None }
    }
}

/// Per-stage training record. Wall-clock time is kept out of the
/// serialized form so that identical runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub steps: Vec<StepLog>,
    /// Full-dataset loss after each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_metrics: BTreeMap<String, f64>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn new(stage: &str, seed: u64, config: &impl Serialize) -> Self {
        Self {
            stage: stage.to_string(),
            seed,
            config: serde_json::to_value(config).expect("configs serialize"),
            steps: Vec::new(),
            epoch_losses: Vec::new(),
            final_metrics: BTreeMap::new(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn curves_finite(&self) -> bool {
        self.steps.iter().all(|s| {
            s.loss.is_finite()
                && [s.mean_reward, s.mean_baseline, s.mean_kl, s.mean_d_total].iter().flatten().all(|v| v.is_finite())
        }) && self.epoch_losses.iter().all(|v| v.is_finite())
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RmConfig;
use super::optim::Optimizer;
use super::report::{StepLog, TrainReport};
use super::TrainingError;
use crate::datasets::PreferenceRecord;
use crate::models::{RewardModel, TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceExample {
    pub prompt: Vec<TokenId>,
    pub chosen: Vec<TokenId>,
    pub rejected: Vec<TokenId>,
    /// Prompt of the rejected side when it differs from `prompt`, for pairs
    /// that compare responses across cohorts of one scenario.
    pub rejected_prompt: Option<Vec<TokenId>>,
}

impl PreferenceExample {
    pub fn new(prompt: Vec<TokenId>, chosen: Vec<TokenId>, rejected: Vec<TokenId>) -> Self {
        Self { prompt, chosen, rejected, rejected_prompt: None }
    }

    pub fn rejected_prompt(&self) -> &[TokenId] {
        self.rejected_prompt.as_deref().unwrap_or(&self.prompt)
    }

    fn margin(&self, rm: &RewardModel) -> Result<f64, TrainingError> {
        Ok(rm.score(&self.prompt, &self.chosen)? - rm.score(self.rejected_prompt(), &self.rejected)?)
    }
}

pub fn preference_examples(records: &[PreferenceRecord], vocab: &Vocabulary) -> Vec<PreferenceExample> {
    records
        .iter()
        .map(|r| {
            PreferenceExample::new(
                vocab.encode_prompt(&r.query),
                vocab.encode_target(&r.chosen),
                vocab.encode_target(&r.rejected),
            )
        })
        .collect()
}

/// `-log sigmoid(margin)`, evaluated without overflow.
pub fn neg_log_sigmoid(margin: f64) -> f64 {
    (-margin).max(0.0) + (-margin.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary ranking loss over score margins `R(chosen) - R(rejected)`.
pub fn ranking_loss_from_margins(margins: &[f64]) -> Result<f64, TrainingError> {
    if margins.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    Ok(margins.iter().map(|&m| neg_log_sigmoid(m)).sum::<f64>() / margins.len() as f64)
}

pub fn ranking_loss(rm: &RewardModel, batch: &[PreferenceExample]) -> Result<f64, TrainingError> {
    let margins = batch.iter().map(|e| e.margin(rm)).collect::<Result<Vec<f64>, TrainingError>>()?;
    ranking_loss_from_margins(&margins)
}

/// Ranking loss and its gradient with respect to the reward parameters.
pub fn ranking_loss_grad(rm: &RewardModel, batch: &[PreferenceExample]) -> Result<(f64, Vec<f64>), TrainingError> {
    if batch.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; rm.params().len()];
    let mut loss = 0.0;
    for e in batch {
        let margin = e.margin(rm)?;
        loss += neg_log_sigmoid(margin) / n;
        // d/dm of -log sigmoid(m) is -sigmoid(-m)
        let coef = -sigmoid(-margin) / n;
        rm.accumulate_score_grad(&e.prompt, &e.chosen, coef, &mut grad)?;
        rm.accumulate_score_grad(e.rejected_prompt(), &e.rejected, -coef, &mut grad)?;
    }
    if !loss.is_finite() {
        return Err(TrainingError::NonFiniteLoss);
    }
    Ok((loss, grad))
}

/// Fraction of pairs with `R(chosen) > R(rejected)` strictly.
pub fn ranking_accuracy(rm: &RewardModel, data: &[PreferenceExample]) -> Result<f64, TrainingError> {
    if data.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let mut hits = 0usize;
    for e in data {
        if e.margin(rm)? > 0.0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Gradient descent on the ranking loss. Accuracy is reported on
/// `held_out`, or on the training pairs when `held_out` is empty.
pub fn train_reward_model(
    mut rm: RewardModel,
    data: &[PreferenceExample],
    held_out: &[PreferenceExample],
    cfg: &RmConfig,
) -> Result<(RewardModel, TrainReport), TrainingError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let started = std::time::Instant::now();
    let eval_set = if held_out.is_empty() { data } else { held_out };
    let mut report = TrainReport::new("train_rm", cfg.seed, cfg);
    report.final_metrics.insert("initial_accuracy".into(), ranking_accuracy(&rm, eval_set)?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, rm.params().len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PreferenceExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grad) = ranking_loss_grad(&rm, &batch)?;
            opt.descend(rm.params_mut(), &grad, cfg.learning_rate);
            report.steps.push(StepLog::loss(step, cfg.learning_rate, loss));
            step += 1;
        }
        report.epoch_losses.push(ranking_loss(&rm, data)?);
    }
    report.final_metrics.insert("accuracy".into(), ranking_accuracy(&rm, eval_set)?);
    report.final_metrics.insert("train_accuracy".into(), ranking_accuracy(&rm, data)?);
    report.final_metrics.insert("steps".into(), step as f64);
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((rm, report))
}

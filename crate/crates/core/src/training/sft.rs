use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::SftConfig;
use super::optim::Optimizer;
use super::report::{StepLog, TrainReport};
use super::TrainingError;
use crate::datasets::IftRecord;
use crate::models::{PolicyModel, TokenId, Vocabulary};

/// A prompt and the continuation the policy should learn to produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftExample {
    pub prompt: Vec<TokenId>,
    pub target: Vec<TokenId>,
}

/// Target text for an instruction record: the explanation, led by the tag
/// when the explanation does not already start with it.
pub fn ift_target_text(rec: &IftRecord) -> String {
    let tag = rec.tag.as_str();
    let first = rec.explanation.split(|c: char| !c.is_alphabetic()).find(|w| !w.is_empty());
    if first.is_some_and(|w| w.eq_ignore_ascii_case(tag)) {
        rec.explanation.clone()
    } else {
        format!("{tag}, {}", rec.explanation)
    }
}

pub fn sft_examples(records: &[IftRecord], vocab: &Vocabulary) -> Vec<SftExample> {
    records
        .iter()
        .map(|r| SftExample {
            prompt: vocab.encode_prompt(&r.question),
            target: vocab.encode_target(&ift_target_text(r)),
        })
        .collect()
}

/// Mean per-token negative log-likelihood of the targets and its gradient.
pub fn sft_nll(model: &PolicyModel, batch: &[SftExample]) -> Result<(f64, Vec<f64>), TrainingError> {
    let tokens: usize = batch.iter().map(|e| e.target.len()).sum();
    if tokens == 0 {
        return Err(TrainingError::EmptyBatch);
    }
    let w = 1.0 / tokens as f64;
    let mut grad = vec![0.0; model.params().len()];
    let mut total = 0.0;
    for ex in batch {
        total += model.accumulate_log_prob_grad(&ex.prompt, &ex.target, -w, &mut grad)?;
    }
    let loss = -total * w;
    if !loss.is_finite() {
        return Err(TrainingError::NonFiniteLoss);
    }
    Ok((loss, grad))
}

/// Mean per-token NLL without gradients.
pub fn sft_loss(model: &PolicyModel, data: &[SftExample]) -> Result<f64, TrainingError> {
    let tokens: usize = data.iter().map(|e| e.target.len()).sum();
    if tokens == 0 {
        return Err(TrainingError::EmptyBatch);
    }
    let mut total = 0.0;
    for ex in data {
        total += model.sequence_log_prob(&ex.prompt, &ex.target)?;
    }
    Ok(-total / tokens as f64)
}

/// Minibatch maximum-likelihood training. Returns the parameters with the
/// lowest full-dataset loss seen at an epoch boundary (including the start).
pub fn sft_train(
    mut model: PolicyModel,
    data: &[SftExample],
    cfg: &SftConfig,
) -> Result<(PolicyModel, TrainReport), TrainingError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let started = std::time::Instant::now();
    let mut report = TrainReport::new("sft", cfg.seed, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, model.params().len());
    let mut best_loss = sft_loss(&model, data)?;
    let mut best = model.params().to_vec();
    report.final_metrics.insert("initial_loss".into(), best_loss);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<SftExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grad) = sft_nll(&model, &batch)?;
            opt.descend(model.params_mut(), &grad, cfg.learning_rate);
            report.steps.push(StepLog::loss(step, cfg.learning_rate, loss));
            step += 1;
        }
        let epoch_loss = sft_loss(&model, data)?;
        if !epoch_loss.is_finite() {
            return Err(TrainingError::NonFiniteLoss);
        }
        report.epoch_losses.push(epoch_loss);
        if epoch_loss < best_loss {
            best_loss = epoch_loss;
            best.copy_from_slice(model.params());
        }
    }
    model.params_mut().copy_from_slice(&best);
    report.final_metrics.insert("best_loss".into(), best_loss);
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((model, report))
}

//! ReMax policy optimization with the group-fairness reward.
//!
//! Each scenario yields one sampled and one greedy rollout per cohort. The
//! scenario reward of the sampled triple, minus `beta` times its summed
//! log-ratio to the frozen reference, is compared against the same quantity
//! for the greedy triple; the difference scales the score function of all
//! three sampled trajectories.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RlConfig;
use super::optim::Optimizer;
use super::report::{StepLog, TrainReport};
use super::{derive_seed, TrainingError};
use crate::fairness::{
    agr_reward, total_disparity, AgeGroup, GroupQualityVector, GroupedScenario, PerGroup, RewardConfig,
};
use crate::models::{ModelError, PolicyModel, RewardModel, Rollout, TokenId, Vocabulary, EOS};

/// Divergence guard on the batch-mean absolute advantage.
pub const MAX_MEAN_ABS_ADVANTAGE: f64 = 1e3;

/// Anything that assigns a real-valued quality to a response.
pub trait QualityScorer {
    fn quality(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<f64, ModelError>;
}

impl QualityScorer for RewardModel {
    fn quality(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<f64, ModelError> {
        self.score(prompt, response)
    }
}

impl<F> QualityScorer for F
where
    F: Fn(&[TokenId], &[TokenId]) -> f64,
{
    fn quality(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<f64, ModelError> {
        Ok(self(prompt, response))
    }
}

/// A grouped scenario in token space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenScenario {
    pub id: String,
    pub prompts: PerGroup<Vec<TokenId>>,
}

impl TokenScenario {
    pub fn encode(s: &GroupedScenario, vocab: &Vocabulary) -> Self {
        Self { id: s.scenario_id.clone(), prompts: s.prompts.map(|_, p| vocab.encode_prompt(p)) }
    }
}

/// One sampled rollout per cohort, each with its own derived seed.
pub fn grouped_rollout(
    policy: &PolicyModel,
    scenario: &TokenScenario,
    max_new_tokens: usize,
    seed: u64,
) -> Result<PerGroup<Rollout>, TrainingError> {
    PerGroup::try_from_fn(|g| {
        Ok(policy.sample_response(&scenario.prompts[g], max_new_tokens, derive_seed(seed, g.index() as u64))?)
    })
}

pub fn greedy_grouped_rollout(
    policy: &PolicyModel,
    scenario: &TokenScenario,
    max_new_tokens: usize,
) -> Result<PerGroup<Rollout>, TrainingError> {
    PerGroup::try_from_fn(|g| Ok(policy.greedy_response(&scenario.prompts[g], max_new_tokens)?))
}

/// Per-cohort quality of the rollouts and the fairness-penalized reward.
pub fn scenario_reward(
    scorer: &impl QualityScorer,
    rollouts: &PerGroup<Rollout>,
    cfg: &RewardConfig,
) -> Result<(f64, GroupQualityVector), TrainingError> {
    let q = PerGroup::try_from_fn(|g| scorer.quality(&rollouts[g].prompt, &rollouts[g].response))?;
    let q = GroupQualityVector::try_from(q)?;
    Ok((agr_reward(&q, cfg), q))
}

fn same_vocab(a: &PolicyModel, b: &PolicyModel) -> Result<(), TrainingError> {
    if a.vocab() != b.vocab() {
        return Err(ModelError::VocabularyMismatch.into());
    }
    Ok(())
}

/// Single-sample sequence-level KL estimate: `log pi(y|x) - log ref(y|x)`.
pub fn kl_divergence(
    policy: &PolicyModel,
    reference: &PolicyModel,
    prompt: &[TokenId],
    response: &[TokenId],
) -> Result<f64, TrainingError> {
    same_vocab(policy, reference)?;
    Ok(policy.sequence_log_prob(prompt, response)? - reference.sequence_log_prob(prompt, response)?)
}

/// Sum over response positions of the full next-token KL between the two
/// models along the given prefix path.
pub fn exact_token_kl(
    policy: &PolicyModel,
    reference: &PolicyModel,
    prompt: &[TokenId],
    response: &[TokenId],
) -> Result<f64, TrainingError> {
    same_vocab(policy, reference)?;
    let p = policy.step_log_dists(prompt, response)?;
    let q = reference.step_log_dists(prompt, response)?;
    Ok(p.iter()
        .zip(&q)
        .map(|(lp, lq)| {
            lp.iter().zip(lq).map(|(a, b)| if a.exp() > 0.0 { a.exp() * (a - b) } else { 0.0 }).sum::<f64>()
        })
        .sum())
}

/// Every response of at most `horizon` tokens (terminated by `<eos>` or the
/// horizon) with its log-probability under `policy`.
pub fn enumerate_responses(
    policy: &PolicyModel,
    prompt: &[TokenId],
    horizon: usize,
) -> Result<Vec<(Vec<TokenId>, f64)>, TrainingError> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), 0.0)];
    while let Some((resp, lp)) = stack.pop() {
        if resp.len() == horizon || resp.last() == Some(&EOS) {
            out.push((resp, lp));
            continue;
        }
        let prefix: Vec<TokenId> = prompt.iter().chain(&resp).copied().collect();
        let next = policy.next_token_log_probs(&prefix)?;
        for (t, l) in next.iter().enumerate().rev() {
            let mut r = resp.clone();
            r.push(t as TokenId);
            stack.push((r, lp + l));
        }
    }
    Ok(out)
}

/// Reward, KL and quality of one grouped rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutValue {
    /// Fairness-penalized scenario reward.
    pub reward: f64,
    /// Summed per-cohort log-ratio to the reference.
    pub kl: f64,
    pub quality: PerGroup<f64>,
    pub d_total: f64,
}

impl RolloutValue {
    /// `reward - beta * kl`.
    pub fn penalized(&self, beta: f64) -> f64 {
        self.reward - beta * self.kl
    }
}

pub fn rollout_value(
    policy: &PolicyModel,
    sft_ref: &PolicyModel,
    scorer: &impl QualityScorer,
    rollouts: &PerGroup<Rollout>,
    reward: &RewardConfig,
) -> Result<RolloutValue, TrainingError> {
    let (r, q) = scenario_reward(scorer, rollouts, reward)?;
    let mut kl = 0.0;
    for g in AgeGroup::ALL {
        kl += kl_divergence(policy, sft_ref, &rollouts[g].prompt, &rollouts[g].response)?;
    }
    Ok(RolloutValue { reward: r, kl, quality: *q.scores(), d_total: total_disparity(&q) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub sampled: RolloutValue,
    pub greedy: RolloutValue,
    /// Penalized sampled reward minus penalized greedy reward.
    pub advantage: f64,
}

/// Adds `advantage * weight * sum_a grad log pi(y_a | x_a)` into `grad` and
/// returns `advantage * sum_a log pi(y_a | x_a)`, the per-sample surrogate
/// whose gradient (advantage held fixed) is the estimate.
pub fn accumulate_surrogate(
    policy: &PolicyModel,
    rollouts: &PerGroup<Rollout>,
    advantage: f64,
    weight: f64,
    grad: &mut [f64],
) -> Result<f64, TrainingError> {
    let mut total = 0.0;
    for g in AgeGroup::ALL {
        total +=
            policy.accumulate_log_prob_grad(&rollouts[g].prompt, &rollouts[g].response, advantage * weight, grad)?;
    }
    Ok(advantage * total)
}

/// ReMax estimate for one scenario given its sampled and greedy rollouts.
#[allow(clippy::too_many_arguments)]
pub fn remax_sample_estimate(
    policy: &PolicyModel,
    sft_ref: &PolicyModel,
    scorer: &impl QualityScorer,
    sampled: &PerGroup<Rollout>,
    greedy: &PerGroup<Rollout>,
    cfg: &RlConfig,
    weight: f64,
    grad: &mut [f64],
) -> Result<ScenarioStats, TrainingError> {
    let reward = cfg.reward();
    let s = rollout_value(policy, sft_ref, scorer, sampled, &reward)?;
    let b = rollout_value(policy, sft_ref, scorer, greedy, &reward)?;
    let advantage = s.penalized(cfg.beta) - b.penalized(cfg.beta);
    accumulate_surrogate(policy, sampled, advantage, weight, grad)?;
    Ok(ScenarioStats { sampled: s, greedy: b, advantage })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemaxStep {
    /// Ascent direction for the objective, averaged over scenarios.
    pub gradient: Vec<f64>,
    pub stats: Vec<ScenarioStats>,
}

impl RemaxStep {
    fn mean(&self, f: impl Fn(&ScenarioStats) -> f64) -> f64 {
        self.stats.iter().map(f).sum::<f64>() / self.stats.len() as f64
    }

    pub fn mean_reward(&self, beta: f64) -> f64 {
        self.mean(|s| s.sampled.penalized(beta))
    }

    pub fn mean_baseline(&self, beta: f64) -> f64 {
        self.mean(|s| s.greedy.penalized(beta))
    }

    pub fn mean_kl(&self) -> f64 {
        self.mean(|s| s.sampled.kl)
    }

    pub fn mean_d_total(&self) -> f64 {
        self.mean(|s| s.sampled.d_total)
    }

    pub fn mean_abs_advantage(&self) -> f64 {
        self.mean(|s| s.advantage.abs())
    }
}

/// ReMax gradient estimate over a batch of scenarios. Scenario `i` samples
/// with seed `derive_seed(seed, i)`.
pub fn remax_step(
    policy: &PolicyModel,
    sft_ref: &PolicyModel,
    scorer: &impl QualityScorer,
    scenarios: &[TokenScenario],
    cfg: &RlConfig,
    seed: u64,
) -> Result<RemaxStep, TrainingError> {
    if scenarios.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    same_vocab(policy, sft_ref)?;
    let weight = 1.0 / scenarios.len() as f64;
    let mut gradient = vec![0.0; policy.params().len()];
    let mut stats = Vec::with_capacity(scenarios.len());
    for (i, sc) in scenarios.iter().enumerate() {
        let sampled = grouped_rollout(policy, sc, cfg.max_new_tokens, derive_seed(seed, i as u64))?;
        let greedy = greedy_grouped_rollout(policy, sc, cfg.max_new_tokens)?;
        stats.push(remax_sample_estimate(policy, sft_ref, scorer, &sampled, &greedy, cfg, weight, &mut gradient)?);
    }
    Ok(RemaxStep { gradient, stats })
}

/// Gradient ascent on the KL-regularized fairness objective.
pub fn rl_train(
    mut policy: PolicyModel,
    sft_ref: &PolicyModel,
    scorer: &impl QualityScorer,
    scenarios: &[TokenScenario],
    cfg: &RlConfig,
) -> Result<(PolicyModel, TrainReport), TrainingError> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let started = std::time::Instant::now();
    let mut report = TrainReport::new("rl", cfg.seed, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, policy.params().len());
    let per_epoch = scenarios.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..scenarios.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TokenScenario> = chunk.iter().map(|&i| scenarios[i].clone()).collect();
            let est = remax_step(&policy, sft_ref, scorer, &batch, cfg, derive_seed(cfg.seed, 1 << 32 | step as u64))?;
            let mean_abs = est.mean_abs_advantage();
            if mean_abs > MAX_MEAN_ABS_ADVANTAGE {
                return Err(TrainingError::Divergence { step, mean_abs_advantage: mean_abs });
            }
            if est.gradient.iter().any(|g| !g.is_finite()) {
                return Err(TrainingError::NonFiniteLoss);
            }
            let lr = cfg.schedule.rate(cfg.learning_rate, step, total);
            let descent: Vec<f64> = est.gradient.iter().map(|g| -g).collect();
            opt.descend(policy.params_mut(), &descent, lr);
            let mean_reward = est.mean_reward(cfg.beta);
            report.steps.push(StepLog {
                step,
                learning_rate: lr,
                loss: -mean_reward,
                mean_reward: Some(mean_reward),
                mean_baseline: Some(est.mean_baseline(cfg.beta)),
                mean_kl: Some(est.mean_kl()),
                mean_d_total: Some(est.mean_d_total()),
            });
            step += 1;
        }
    }
    let tail = report.steps.len().min(per_epoch.max(1));
    let recent = &report.steps[report.steps.len() - tail..];
    let avg = |f: fn(&StepLog) -> Option<f64>| recent.iter().filter_map(f).sum::<f64>() / tail as f64;
    report.final_metrics.insert("mean_reward".into(), avg(|s| s.mean_reward));
    report.final_metrics.insert("mean_kl".into(), avg(|s| s.mean_kl));
    report.final_metrics.insert("mean_d_total".into(), avg(|s| s.mean_d_total));
    report.final_metrics.insert("beta".into(), cfg.beta);
    report.final_metrics.insert("lambda".into(), cfg.lambda);
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((policy, report))
}

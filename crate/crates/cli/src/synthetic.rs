//! Planted-bias synthetic task with closed-form ground-truth quality.
//!
//! A prompt is `<bos> <cohort marker> <topic>` and a response is one content
//! token followed by `<eos>`. The stereotyped answer is the best answer for
//! young and middle-aged prompts and the worst for old prompts, whose best
//! attainable answer is worse by the planted bias. Demonstrations lean on
//! the stereotype for every cohort, so the supervised policy starts out
//! serving old prompts badly.

use serde::{Deserialize, Serialize};

use agr_core::models::{Architecture, PolicyModel, RewardModel, TokenId, Vocabulary, BOS, EOS};
use agr_core::training::{
    derive_seed, enumerate_responses, rl_train, sft_train, train_reward_model, OptimizerKind, PreferenceExample,
    RlConfig, RmConfig, Schedule, SftConfig, SftExample, TokenScenario, TrainingError,
};
use agr_core::{fairness_gap, total_disparity, AgeGroup, GroupQualityVector, PerGroup};

pub const RESPONSES: [&str; 3] = ["stereotyped", "balanced", "vague"];

/// One value per candidate answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answers<T> {
    pub stereotyped: T,
    pub balanced: T,
    pub vague: T,
}

impl<T: Copy> Answers<T> {
    pub fn get(&self, i: usize) -> T {
        [self.stereotyped, self.balanced, self.vague][i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    /// Number of topic tokens; one grouped scenario per topic.
    pub topics: usize,
    /// Ground-truth quality of each answer for young and middle-aged prompts.
    pub quality: Answers<f64>,
    /// How far the best answer for old prompts falls short of the best
    /// answer for the other cohorts.
    pub planted_bias: f64,
    /// Demonstrations per (topic, cohort) for young and middle-aged prompts.
    pub demos: Answers<usize>,
    /// Demonstrations per topic for old prompts.
    pub old_demos: Answers<usize>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub sft: SftConfig,
    pub rm: RmConfig,
    pub rl: RlConfig,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            topics: 4,
            quality: Answers { stereotyped: 3.0, balanced: 2.0, vague: 1.0 },
            planted_bias: 1.0,
            demos: Answers { stereotyped: 3, balanced: 5, vague: 2 },
            old_demos: Answers { stereotyped: 7, balanced: 2, vague: 1 },
            embed_dim: 8,
            hidden_dim: 16,
            sft: SftConfig { learning_rate: 0.02, batch_size: 16, epochs: 60, optimizer: OptimizerKind::Adam, seed: 0 },
            rm: RmConfig { learning_rate: 0.01, batch_size: 16, epochs: 60, optimizer: OptimizerKind::Adam, seed: 0 },
            rl: RlConfig {
                learning_rate: 0.01,
                batch_size: 4,
                epochs: 300,
                beta: 0.05,
                lambda: RlConfig::default().lambda,
                schedule: Schedule::Constant,
                optimizer: OptimizerKind::Sgd,
                max_new_tokens: 2,
                max_len: 8,
                seed: 0,
            },
        }
    }
}

const MARKERS: [&str; 3] = ["young", "middle", "old"];

impl SyntheticTaskSpec {
    pub fn vocab(&self) -> Vocabulary {
        let topics = (0..self.topics).map(|t| format!("topic{t}"));
        let words: Vec<String> =
            MARKERS.iter().map(|s| s.to_string()).chain(topics).chain(RESPONSES.map(String::from)).collect();
        Vocabulary::new(words).expect("synthetic vocabulary is valid")
    }

    pub fn arch(&self) -> Architecture {
        Architecture {
            vocab_size: self.vocab().len(),
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            layers: 1,
            max_len: 3 + self.rl.max_new_tokens.max(2),
        }
    }

    fn answer_ids(&self, vocab: &Vocabulary) -> [TokenId; 3] {
        RESPONSES.map(|r| vocab.id(r).expect("answer token"))
    }

    pub fn prompt(&self, vocab: &Vocabulary, group: AgeGroup, topic: usize) -> Vec<TokenId> {
        let marker = vocab.id(MARKERS[group.index()]).expect("marker");
        vec![BOS, marker, vocab.id(&format!("topic{topic}")).expect("topic")]
    }

    fn group_quality(&self, group: AgeGroup) -> Answers<f64> {
        match group {
            AgeGroup::Old => Answers {
                stereotyped: 0.0,
                balanced: self.quality.stereotyped - self.planted_bias,
                vague: self.quality.vague,
            },
            _ => self.quality,
        }
    }

    /// Ground-truth quality; only the first response token counts.
    pub fn ground_truth(&self, vocab: &Vocabulary, group: AgeGroup, response: &[TokenId]) -> f64 {
        let ids = self.answer_ids(vocab);
        let q = self.group_quality(group);
        response.first().and_then(|t| ids.iter().position(|a| a == t)).map_or(0.0, |i| q.get(i))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.topics == 0 {
            return Err("synthetic.topics must be >= 1".into());
        }
        let q = self.quality;
        if !(q.stereotyped > q.balanced && q.balanced > q.vague && q.vague > 0.0) {
            return Err("synthetic.quality must satisfy stereotyped > balanced > vague > 0".into());
        }
        let best_old = q.stereotyped - self.planted_bias;
        if !(self.planted_bias >= 0.0 && best_old > q.vague) {
            return Err("synthetic.planted_bias must keep the old cohort's best answer above vague".into());
        }
        if self.rl.max_new_tokens == 0 {
            return Err("synthetic.rl.max_new_tokens must be >= 1".into());
        }
        Ok(())
    }

    pub fn sft_data(&self, vocab: &Vocabulary) -> Vec<SftExample> {
        let ids = self.answer_ids(vocab);
        let mut out = Vec::new();
        for topic in 0..self.topics {
            for g in AgeGroup::ALL {
                let demos = if g == AgeGroup::Old { self.old_demos } else { self.demos };
                for (i, &id) in ids.iter().enumerate() {
                    for _ in 0..demos.get(i) {
                        out.push(SftExample { prompt: self.prompt(vocab, g, topic), target: vec![id, EOS] });
                    }
                }
            }
        }
        out
    }

    fn candidates(&self, vocab: &Vocabulary) -> Vec<Vec<TokenId>> {
        std::iter::once(vec![EOS]).chain(self.answer_ids(vocab).map(|a| vec![a, EOS])).collect()
    }

    /// Every ordered pair of (cohort, answer) within a topic whose ground
    /// truth differs, including pairs across cohorts.
    pub fn preference_data(&self, vocab: &Vocabulary) -> Vec<PreferenceExample> {
        let cands = self.candidates(vocab);
        let mut out = Vec::new();
        for topic in 0..self.topics {
            let scored: Vec<(Vec<TokenId>, &Vec<TokenId>, f64)> = AgeGroup::ALL
                .iter()
                .flat_map(|&g| cands.iter().map(move |c| (g, c)))
                .map(|(g, c)| (self.prompt(vocab, g, topic), c, self.ground_truth(vocab, g, c)))
                .collect();
            for (pa, ca, qa) in &scored {
                for (pb, cb, qb) in &scored {
                    if qa > qb {
                        out.push(PreferenceExample {
                            prompt: pa.clone(),
                            chosen: (*ca).clone(),
                            rejected: (*cb).clone(),
                            rejected_prompt: (pa != pb).then(|| pb.clone()),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn scenarios(&self, vocab: &Vocabulary) -> Vec<TokenScenario> {
        (0..self.topics)
            .map(|t| TokenScenario {
                id: format!("topic{t}"),
                prompts: PerGroup::from_fn(|g| self.prompt(vocab, g, t)),
            })
            .collect()
    }

    /// Exact expected ground-truth quality per cohort, averaged over topics.
    pub fn expected_quality(&self, policy: &PolicyModel) -> Result<PerGroup<f64>, TrainingError> {
        let vocab = policy.vocab();
        PerGroup::try_from_fn(|g| {
            let mut total = 0.0;
            for t in 0..self.topics {
                for (resp, lp) in enumerate_responses(policy, &self.prompt(vocab, g, t), self.rl.max_new_tokens)? {
                    total += lp.exp() * self.ground_truth(vocab, g, &resp);
                }
            }
            Ok(total / self.topics as f64)
        })
    }
}

/// Supervised and reward stages for one seed; they do not depend on lambda.
pub struct SeedModels {
    pub sft: PolicyModel,
    pub reward: RewardModel,
    pub reward_accuracy: f64,
}

pub fn train_seed_models(spec: &SyntheticTaskSpec, seed: u64) -> Result<SeedModels, TrainingError> {
    let vocab = spec.vocab();
    let init = PolicyModel::new(vocab.clone(), spec.arch(), derive_seed(seed, 0))?;
    let sft_cfg = SftConfig { seed: derive_seed(seed, 1), ..spec.sft };
    let (sft, _) = sft_train(init, &spec.sft_data(&vocab), &sft_cfg)?;
    let rm = RewardModel::from_policy_backbone(&sft, derive_seed(seed, 2));
    let rm_cfg = RmConfig { seed: derive_seed(seed, 3), ..spec.rm };
    let (reward, report) = train_reward_model(rm, &spec.preference_data(&vocab), &[], &rm_cfg)?;
    Ok(SeedModels { sft, reward, reward_accuracy: report.final_metrics["accuracy"] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRun {
    pub lambda: f64,
    pub seed: u64,
    pub sft_quality: PerGroup<f64>,
    pub quality: PerGroup<f64>,
    pub d_total: f64,
    pub gap: f64,
    pub reward_accuracy: f64,
    pub final_kl: f64,
}

pub fn run_one(
    spec: &SyntheticTaskSpec,
    models: &SeedModels,
    lambda: f64,
    seed: u64,
) -> Result<SyntheticRun, TrainingError> {
    let vocab = spec.vocab();
    let cfg = RlConfig { lambda, seed: derive_seed(seed, 4), ..spec.rl };
    let (policy, report) = rl_train(models.sft.clone(), &models.sft, &models.reward, &spec.scenarios(&vocab), &cfg)?;
    let quality = spec.expected_quality(&policy)?;
    let q = GroupQualityVector::try_from(quality)?;
    Ok(SyntheticRun {
        lambda,
        seed,
        sft_quality: spec.expected_quality(&models.sft)?,
        quality,
        d_total: total_disparity(&q),
        gap: fairness_gap(&quality),
        reward_accuracy: models.reward_accuracy,
        final_kl: report.final_metrics["mean_kl"],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub mean_d_total: f64,
    pub std_d_total: f64,
    /// Per-cohort quality averaged over seeds.
    pub mean_quality: PerGroup<f64>,
    /// Max minus min of `mean_quality`.
    pub gap_of_means: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub spec: SyntheticTaskSpec,
    pub seeds: Vec<u64>,
    pub runs: Vec<SyntheticRun>,
    pub summary: Vec<LambdaSummary>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error("need >= 2 lambdas, got {0}")]
    TooFewLambdas(usize),
    #[error("need >= 3 seeds, got {0}")]
    TooFewSeeds(usize),
    #[error("invalid synthetic task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    Training(#[from] TrainingError),
}

pub fn run_synthetic(
    spec: &SyntheticTaskSpec,
    lambdas: &[f64],
    seeds: &[u64],
) -> Result<SyntheticReport, SyntheticError> {
    if lambdas.len() < 2 {
        return Err(SyntheticError::TooFewLambdas(lambdas.len()));
    }
    if seeds.len() < 3 {
        return Err(SyntheticError::TooFewSeeds(seeds.len()));
    }
    spec.validate().map_err(SyntheticError::InvalidTask)?;
    let mut runs = Vec::new();
    for &seed in seeds {
        let models = train_seed_models(spec, seed)?;
        for &lambda in lambdas {
            runs.push(run_one(spec, &models, lambda, seed)?);
        }
    }
    let summary = lambdas
        .iter()
        .map(|&lambda| {
            let mine: Vec<&SyntheticRun> = runs.iter().filter(|r| r.lambda == lambda).collect();
            let (mean_d_total, std_d_total) = mean_std(&mine.iter().map(|r| r.d_total).collect::<Vec<_>>());
            let mean_quality =
                PerGroup::from_fn(|g| mine.iter().map(|r| r.quality[g]).sum::<f64>() / mine.len() as f64);
            LambdaSummary { lambda, mean_d_total, std_d_total, mean_quality, gap_of_means: fairness_gap(&mean_quality) }
        })
        .collect();
    Ok(SyntheticReport { spec: spec.clone(), seeds: seeds.to_vec(), runs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_table() {
        let spec = SyntheticTaskSpec::default();
        let v = spec.vocab();
        let id = |w| v.id(w).unwrap();
        assert_eq!(spec.ground_truth(&v, AgeGroup::Young, &[id("stereotyped"), EOS]), 3.0);
        assert_eq!(spec.ground_truth(&v, AgeGroup::Old, &[id("stereotyped"), EOS]), 0.0);
        assert_eq!(spec.ground_truth(&v, AgeGroup::Old, &[id("balanced"), EOS]), 2.0);
        assert_eq!(spec.ground_truth(&v, AgeGroup::MiddleAged, &[EOS]), 0.0);
        assert_eq!(spec.ground_truth(&v, AgeGroup::MiddleAged, &[id("vague"), id("old")]), 1.0);
    }

    #[test]
    fn preference_pairs_respect_ground_truth() {
        let spec = SyntheticTaskSpec { topics: 1, ..Default::default() };
        let v = spec.vocab();
        let pairs = spec.preference_data(&v);
        assert!(!pairs.is_empty());
        let group_of = |p: &[TokenId]| AgeGroup::ALL[(p[1] - 4) as usize];
        for p in &pairs {
            let hi = spec.ground_truth(&v, group_of(&p.prompt), &p.chosen);
            let lo = spec.ground_truth(&v, group_of(p.rejected_prompt()), &p.rejected);
            assert!(hi > lo);
        }
    }

    #[test]
    fn argument_checks() {
        let spec = SyntheticTaskSpec::default();
        assert!(matches!(run_synthetic(&spec, &[0.5], &[1, 2, 3]), Err(SyntheticError::TooFewLambdas(1))));
        assert!(matches!(run_synthetic(&spec, &[0.0, 0.5], &[1]), Err(SyntheticError::TooFewSeeds(1))));
        let bad = SyntheticTaskSpec { planted_bias: 5.0, ..Default::default() };
        assert!(matches!(run_synthetic(&bad, &[0.0, 0.5], &[1, 2, 3]), Err(SyntheticError::InvalidTask(_))));
    }
}

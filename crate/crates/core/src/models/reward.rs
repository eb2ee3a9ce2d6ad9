use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{backward, forward, init_backbone, uniform_fill, Architecture};
use super::policy::PolicyModel;
use super::vocab::{TokenId, Vocabulary, EOS, PAD};
use super::ModelError;

/// Scalar quality model: the policy backbone with a linear head on the
/// final token's representation.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    vocab: Vocabulary,
    arch: Architecture,
    params: Vec<f64>,
}

const HEAD_INIT_SCALE: f64 = 0.5;

impl RewardModel {
    pub fn new(vocab: Vocabulary, arch: Architecture, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; Self::param_len(&arch)];
        init_backbone(&arch, &mut params, &mut rng);
        let head = arch.backbone_len();
        uniform_fill(&mut params[head..head + arch.hidden_dim], HEAD_INIT_SCALE, &mut rng);
        Self::from_params(vocab, arch, params)
    }

    /// Copies the policy backbone and draws a fresh scoring head.
    pub fn from_policy_backbone(policy: &PolicyModel, seed: u64) -> Self {
        let arch = *policy.arch();
        let n = arch.backbone_len();
        let mut params = vec![0.0; Self::param_len(&arch)];
        params[..n].copy_from_slice(&policy.params()[..n]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        uniform_fill(&mut params[n..n + arch.hidden_dim], HEAD_INIT_SCALE, &mut rng);
        Self { vocab: policy.vocab().clone(), arch, params }
    }

    pub fn from_params(vocab: Vocabulary, arch: Architecture, params: Vec<f64>) -> Result<Self, ModelError> {
        arch.validate()?;
        if vocab.len() != arch.vocab_size || params.len() != Self::param_len(&arch) {
            return Err(ModelError::ArchitectureMismatch(format!(
                "reward model expects {} tokens / {} parameters, found {} / {}",
                arch.vocab_size,
                Self::param_len(&arch),
                vocab.len(),
                params.len()
            )));
        }
        Ok(Self { vocab, arch, params })
    }

    pub fn param_len(arch: &Architecture) -> usize {
        arch.backbone_len() + arch.hidden_dim + 1
    }

    pub fn with_zero_head(mut self) -> Self {
        let n = self.arch.backbone_len();
        self.params[n..].iter_mut().for_each(|v| *v = 0.0);
        self
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn sequence(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<Vec<TokenId>, ModelError> {
        if prompt.is_empty() {
            return Err(ModelError::EmptyPrompt);
        }
        self.vocab.check(prompt)?;
        self.vocab.check(response)?;
        let response = strip_padding(response);
        let len = prompt.len() + response.len();
        if len > self.arch.max_len {
            return Err(ModelError::PromptTooLong { len, max: self.arch.max_len });
        }
        Ok(prompt.iter().chain(response).copied().collect())
    }

    pub fn score(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<f64, ModelError> {
        let tokens = self.sequence(prompt, response)?;
        let steps = forward(&self.arch, &self.params, &tokens);
        let top = steps.last().unwrap().top();
        let n = self.arch.backbone_len();
        let (w, c) = (&self.params[n..n + self.arch.hidden_dim], self.params[n + self.arch.hidden_dim]);
        Ok(c + w.iter().zip(top).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Adds `weight * d score / d params` into `grad`; returns the score.
    pub fn accumulate_score_grad(
        &self,
        prompt: &[TokenId],
        response: &[TokenId],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        let tokens = self.sequence(prompt, response)?;
        let steps = forward(&self.arch, &self.params, &tokens);
        let last = tokens.len() - 1;
        let top = steps[last].top();
        let n = self.arch.backbone_len();
        let hdim = self.arch.hidden_dim;
        let w = &self.params[n..n + hdim];
        let score = self.params[n + hdim] + w.iter().zip(top).map(|(a, b)| a * b).sum::<f64>();
        for j in 0..hdim {
            grad[n + j] += weight * top[j];
        }
        grad[n + hdim] += weight;
        let dh: Vec<f64> = w.iter().map(|v| weight * v).collect();
        backward(&self.arch, &self.params, &tokens, &steps, &[(last, dh)], grad);
        Ok(score)
    }
}

/// Drops `<pad>` tokens trailing an `<eos>`.
fn strip_padding(response: &[TokenId]) -> &[TokenId] {
    match response.iter().rposition(|&t| t != PAD) {
        Some(i) if response[i] == EOS => &response[..=i],
        _ => response,
    }
}

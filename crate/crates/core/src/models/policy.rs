use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{affine, backward, forward, init_backbone, log_softmax, uniform_fill, Architecture, Cursor};
use super::vocab::{TokenId, Vocabulary, EOS};
use super::ModelError;

/// A sampled or greedy continuation with its exact log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub prompt: Vec<TokenId>,
    pub response: Vec<TokenId>,
    pub log_prob: f64,
    pub is_greedy: bool,
}

/// Autoregressive generator: shared backbone plus a vocabulary-sized
/// linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    vocab: Vocabulary,
    arch: Architecture,
    params: Vec<f64>,
}

impl PolicyModel {
    pub fn new(vocab: Vocabulary, arch: Architecture, seed: u64) -> Result<Self, ModelError> {
        check_arch(&vocab, &arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; Self::param_len(&arch)];
        init_backbone(&arch, &mut params, &mut rng);
        let head = arch.backbone_len();
        let scale = (6.0 / (arch.hidden_dim + arch.vocab_size) as f64).sqrt();
        uniform_fill(&mut params[head..head + arch.vocab_size * arch.hidden_dim], scale, &mut rng);
        Ok(Self { vocab, arch, params })
    }

    pub fn from_params(vocab: Vocabulary, arch: Architecture, params: Vec<f64>) -> Result<Self, ModelError> {
        check_arch(&vocab, &arch)?;
        if params.len() != Self::param_len(&arch) {
            return Err(ModelError::ArchitectureMismatch(format!(
                "expected {} policy parameters, found {}",
                Self::param_len(&arch),
                params.len()
            )));
        }
        Ok(Self { vocab, arch, params })
    }

    pub fn param_len(arch: &Architecture) -> usize {
        arch.backbone_len() + arch.vocab_size * arch.hidden_dim + arch.vocab_size
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

    /// Output-head weight matrix (vocab x hidden, row-major) and bias.
    pub fn head_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let start = self.arch.backbone_len();
        let (w, b) = self.params[start..].split_at_mut(self.arch.vocab_size * self.arch.hidden_dim);
        (w, b)
    }

    fn head(&self) -> (&[f64], &[f64]) {
        let start = self.arch.backbone_len();
        self.params[start..].split_at(self.arch.vocab_size * self.arch.hidden_dim)
    }

    fn head_log_probs(&self, top: &[f64]) -> Vec<f64> {
        let (w, b) = self.head();
        let lp = log_softmax(&affine(w, b, top));
        debug_assert!((lp.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-6);
        lp
    }

    fn check_prompt(&self, prompt: &[TokenId]) -> Result<(), ModelError> {
        if prompt.is_empty() {
            return Err(ModelError::EmptyPrompt);
        }
        self.vocab.check(prompt)?;
        if prompt.len() >= self.arch.max_len {
            return Err(ModelError::PromptTooLong { len: prompt.len(), max: self.arch.max_len });
        }
        Ok(())
    }

    fn check_pair(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<(), ModelError> {
        self.check_prompt(prompt)?;
        self.vocab.check(response)?;
        if prompt.len() + response.len() > self.arch.max_len {
            return Err(ModelError::PromptTooLong { len: prompt.len() + response.len(), max: self.arch.max_len });
        }
        Ok(())
    }

    /// Log-distribution of the token following `prefix`.
    pub fn next_token_log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        self.check_prompt(prefix)?;
        let mut cursor = Cursor::new(&self.arch, &self.params);
        let mut last = None;
        for &t in prefix {
            last = Some(cursor.push(t));
        }
        Ok(self.head_log_probs(last.unwrap().top()))
    }

    fn decode_with(
        &self,
        prompt: &[TokenId],
        max_new_tokens: usize,
        mut choose: impl FnMut(&[f64]) -> TokenId,
    ) -> Result<(Vec<TokenId>, f64), ModelError> {
        self.check_prompt(prompt)?;
        let cap = max_new_tokens.min(self.arch.max_len - prompt.len());
        let mut cursor = Cursor::new(&self.arch, &self.params);
        let mut step = None;
        for &t in prompt {
            step = Some(cursor.push(t));
        }
        let mut response = Vec::new();
        let mut log_prob = 0.0;
        while response.len() < cap {
            let lp = self.head_log_probs(step.as_ref().unwrap().top());
            let tok = choose(&lp);
            log_prob += lp[tok as usize];
            response.push(tok);
            if tok == EOS {
                break;
            }
            step = Some(cursor.push(tok));
        }
        Ok((response, log_prob))
    }

    /// Ancestral sampling until `<eos>` or the length cap.
    pub fn sample_response_with(
        &self,
        prompt: &[TokenId],
        max_new_tokens: usize,
        rng: &mut impl Rng,
    ) -> Result<Rollout, ModelError> {
        let (response, log_prob) = self.decode_with(prompt, max_new_tokens, |lp| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    return i as TokenId;
                }
            }
            // u landed in the rounding slack above the cumulative sum
            lp.iter().rposition(|l| l.exp() > 0.0).unwrap() as TokenId
        })?;
        Ok(Rollout { prompt: prompt.to_vec(), response, log_prob, is_greedy: false })
    }

    pub fn sample_response(&self, prompt: &[TokenId], max_new_tokens: usize, seed: u64) -> Result<Rollout, ModelError> {
        self.sample_response_with(prompt, max_new_tokens, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Argmax decoding; ties go to the lowest token id.
    pub fn greedy_response(&self, prompt: &[TokenId], max_new_tokens: usize) -> Result<Rollout, ModelError> {
        let (response, log_prob) = self.decode_with(prompt, max_new_tokens, argmax)?;
        Ok(Rollout { prompt: prompt.to_vec(), response, log_prob, is_greedy: true })
    }

    /// Per-step log-probabilities of `response` given `prompt`.
    pub fn token_log_probs(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(self.step_log_dists(prompt, response)?.into_iter().zip(response).map(|(lp, &t)| lp[t as usize]).collect())
    }

    /// Full next-token log-distributions at every response position.
    pub fn step_log_dists(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_pair(prompt, response)?;
        let mut cursor = Cursor::new(&self.arch, &self.params);
        let mut step = None;
        for &t in prompt {
            step = Some(cursor.push(t));
        }
        let mut out = Vec::with_capacity(response.len());
        for (i, &t) in response.iter().enumerate() {
            out.push(self.head_log_probs(step.as_ref().unwrap().top()));
            if i + 1 < response.len() {
                step = Some(cursor.push(t));
            }
        }
        Ok(out)
    }

    pub fn sequence_log_prob(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<f64, ModelError> {
        Ok(self.token_log_probs(prompt, response)?.into_iter().sum())
    }

    /// Adds `weight * d/dparams log p(response | prompt)` into `grad` and
    /// returns the log-probability.
    pub fn accumulate_log_prob_grad(
        &self,
        prompt: &[TokenId],
        response: &[TokenId],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        self.check_pair(prompt, response)?;
        if response.is_empty() {
            return Ok(0.0);
        }
        let tokens: Vec<TokenId> = prompt.iter().chain(&response[..response.len() - 1]).copied().collect();
        let steps = forward(&self.arch, &self.params, &tokens);
        let hdim = self.arch.hidden_dim;
        let vsize = self.arch.vocab_size;
        let head = self.arch.backbone_len();
        let (w, b) = self.head();
        let mut log_prob = 0.0;
        let mut top_grads = Vec::with_capacity(response.len());
        for (i, &target) in response.iter().enumerate() {
            let pos = prompt.len() - 1 + i;
            let top = steps[pos].top();
            let lp = log_softmax(&affine(w, b, top));
            log_prob += lp[target as usize];
            // d log p_target / d logits = onehot - softmax
            let dlogits: Vec<f64> =
                lp.iter().enumerate().map(|(k, l)| weight * ((k == target as usize) as u8 as f64 - l.exp())).collect();
            let mut dh = vec![0.0; hdim];
            for k in 0..vsize {
                let row = head + k * hdim;
                for j in 0..hdim {
                    grad[row + j] += dlogits[k] * top[j];
                    dh[j] += w[k * hdim + j] * dlogits[k];
                }
                grad[head + vsize * hdim + k] += dlogits[k];
            }
            top_grads.push((pos, dh));
        }
        backward(&self.arch, &self.params, &tokens, &steps, &top_grads, grad);
        Ok(log_prob)
    }
}

pub(crate) fn argmax(lp: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &v) in lp.iter().enumerate() {
        if v > lp[best] {
            best = i;
        }
    }
    best as TokenId
}

fn check_arch(vocab: &Vocabulary, arch: &Architecture) -> Result<(), ModelError> {
    arch.validate()?;
    if vocab.len() != arch.vocab_size {
        return Err(ModelError::ArchitectureMismatch(format!(
            "vocabulary has {} tokens but architecture expects {}",
            vocab.len(),
            arch.vocab_size
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::vocab::BOS;

    pub(crate) fn tiny(seed: u64) -> PolicyModel {
        let vocab = Vocabulary::new(["a", "b", "c", "d", "e", "f"]).unwrap();
        let arch = Architecture { vocab_size: vocab.len(), embed_dim: 4, hidden_dim: 5, layers: 2, max_len: 16 };
        PolicyModel::new(vocab, arch, seed).unwrap()
    }

    /// Head ignores the hidden state and always prefers `token`.
    fn one_hot(token: TokenId) -> PolicyModel {
        let mut m = tiny(1);
        let (w, b) = m.head_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = -50.0);
        b[token as usize] = 50.0;
        m
    }

    fn uniform() -> PolicyModel {
        let mut m = tiny(1);
        let (w, b) = m.head_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        m
    }

    #[test]
    fn one_hot_sampling_equals_greedy() {
        let m = one_hot(5);
        let g = m.greedy_response(&[BOS, 4], 3).unwrap();
        assert_eq!(g.response, vec![5, 5, 5]);
        for seed in 0..5 {
            assert_eq!(m.sample_response(&[BOS, 4], 3, seed).unwrap().response, g.response);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = tiny(9);
        let a = m.sample_response(&[BOS, 4, 5], 8, 42).unwrap();
        let b = m.sample_response(&[BOS, 4, 5], 8, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.log_prob <= 0.0);
        assert!(a.response.len() == 8 || *a.response.last().unwrap() == EOS);
    }

    #[test]
    fn uniform_log_probs() {
        let m = uniform();
        let v = m.vocab().len() as f64;
        let r = m.sample_response(&[BOS], 1, 3).unwrap();
        assert!((r.log_prob + v.ln()).abs() < 1e-12);
        let lp = m.sequence_log_prob(&[BOS, 4], &[5, 6, 7]).unwrap();
        assert!((lp + 3.0 * v.ln()).abs() < 1e-12);
        assert_eq!(m.sequence_log_prob(&[BOS], &[]).unwrap(), 0.0);
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let mut m = tiny(1);
        let (w, b) = m.head_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        b[4] = 2.0;
        b[9] = 2.0;
        let g = m.greedy_response(&[BOS], 1).unwrap();
        assert_eq!(g.response, vec![4]);
        assert!(g.is_greedy);
    }

    #[test]
    fn greedy_beats_single_swaps() {
        let m = tiny(3);
        let prompt = [BOS, 6];
        let g = m.greedy_response(&prompt, 4).unwrap();
        for pos in 0..g.response.len() {
            let prefix: Vec<_> = prompt.iter().chain(&g.response[..pos]).copied().collect();
            let lp = m.next_token_log_probs(&prefix).unwrap();
            for alt in 0..m.vocab().len() {
                assert!(lp[g.response[pos] as usize] >= lp[alt]);
            }
        }
    }

    #[test]
    fn rescoring_matches_sampling() {
        let m = tiny(5);
        for seed in 0..20 {
            let r = m.sample_response(&[BOS, 7, 8], 10, seed).unwrap();
            let again = m.sequence_log_prob(&r.prompt, &r.response).unwrap();
            assert!((again - r.log_prob).abs() < 1e-9);
            for lp in m.token_log_probs(&r.prompt, &r.response).unwrap() {
                assert!(lp.exp() > 0.0 && lp.exp() <= 1.0);
            }
        }
    }

    #[test]
    fn input_validation() {
        let m = tiny(1);
        assert!(matches!(m.sample_response(&[BOS, 99], 2, 0), Err(ModelError::UnknownToken(99))));
        assert!(matches!(m.greedy_response(&[BOS; 16], 2), Err(ModelError::PromptTooLong { .. })));
        assert!(matches!(m.greedy_response(&[], 2), Err(ModelError::EmptyPrompt)));
        assert!(m.sequence_log_prob(&[BOS], &[42]).is_err());
        // the length cap keeps prompt + response within max_len
        let r = one_hot(5).sample_response(&[BOS; 14], 10, 0).unwrap();
        assert_eq!(r.response.len(), 2);
    }
}

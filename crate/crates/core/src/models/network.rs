//! Shared autoregressive backbone.
//!
//! Position `t` sees the embedding of token `t` concatenated with the mean
//! embedding of tokens `0..=t`, followed by a stack of tanh layers. The
//! running mean makes the representation causal and lets generation run
//! incrementally with the exact arithmetic used for full-sequence passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::TokenId;
use super::ModelError;

/// Hard cap on prompt + response length.
pub const MAX_SEQ_LEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub max_len: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidArchitecture(m.to_string()));
        if self.vocab_size < 5 {
            return bad("vocab_size must cover the specials plus at least one symbol");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.layers == 0 {
            return bad("at least one hidden layer is required");
        }
        if self.max_len < 2 || self.max_len > MAX_SEQ_LEN {
            return bad("max_len must lie in 2..=512");
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> BackboneLayout {
        let embed_len = self.vocab_size * self.embed_dim;
        let mut offset = embed_len;
        let mut layers = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let fan_in = if l == 0 { 2 * self.embed_dim } else { self.hidden_dim };
            let w = offset;
            let b = w + self.hidden_dim * fan_in;
            offset = b + self.hidden_dim;
            layers.push(Layer { w, b, fan_in });
        }
        BackboneLayout { layers, len: offset }
    }

    pub fn backbone_len(&self) -> usize {
        self.layout().len
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layer {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
}

/// Parameter offsets; the embedding table starts at 0.
#[derive(Debug, Clone)]
pub(crate) struct BackboneLayout {
    pub layers: Vec<Layer>,
    pub len: usize,
}

pub(crate) fn uniform_fill(out: &mut [f64], scale: f64, rng: &mut impl Rng) {
    for v in out {
        *v = rng.gen_range(-scale..scale);
    }
}

/// Random backbone parameters (embeddings then layers).
pub(crate) fn init_backbone(arch: &Architecture, params: &mut [f64], rng: &mut impl Rng) {
    let layout = arch.layout();
    let embed_len = arch.vocab_size * arch.embed_dim;
    uniform_fill(&mut params[..embed_len], 0.5, rng);
    for layer in &layout.layers {
        let scale = (6.0 / (layer.fan_in + arch.hidden_dim) as f64).sqrt();
        uniform_fill(&mut params[layer.w..layer.b], scale, rng);
    }
}

pub(crate) fn dense_tanh(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(i, &bi)| {
            let row = &w[i * x.len()..(i + 1) * x.len()];
            (bi + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()).tanh()
        })
        .collect()
}

pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(i, &bi)| bi + w[i * x.len()..(i + 1) * x.len()].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Incremental forward state over a growing prefix.
pub(crate) struct Cursor<'a> {
    arch: &'a Architecture,
    layout: BackboneLayout,
    params: &'a [f64],
    sum: Vec<f64>,
    count: usize,
}

/// Activations of one position.
pub(crate) struct Step {
    pub input: Vec<f64>,
    pub hidden: Vec<Vec<f64>>,
}

impl Step {
    pub fn top(&self) -> &[f64] {
        self.hidden.last().unwrap()
    }
}

impl<'a> Cursor<'a> {
    pub fn new(arch: &'a Architecture, params: &'a [f64]) -> Self {
        Self { arch, layout: arch.layout(), params, sum: vec![0.0; arch.embed_dim], count: 0 }
    }

    pub fn push(&mut self, token: TokenId) -> Step {
        let d = self.arch.embed_dim;
        let e = &self.params[token as usize * d..(token as usize + 1) * d];
        for (s, v) in self.sum.iter_mut().zip(e) {
            *s += v;
        }
        self.count += 1;
        let n = self.count as f64;
        let mut input = Vec::with_capacity(2 * d);
        input.extend_from_slice(e);
        input.extend(self.sum.iter().map(|s| s / n));
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(self.layout.layers.len());
        for layer in &self.layout.layers {
            let x = hidden.last().map_or(input.as_slice(), Vec::as_slice);
            let h =
                dense_tanh(&self.params[layer.w..layer.b], &self.params[layer.b..layer.b + self.arch.hidden_dim], x);
            hidden.push(h);
        }
        Step { input, hidden }
    }
}

/// Full forward pass over `tokens`, keeping every activation.
pub(crate) fn forward(arch: &Architecture, params: &[f64], tokens: &[TokenId]) -> Vec<Step> {
    let mut cursor = Cursor::new(arch, params);
    tokens.iter().map(|&t| cursor.push(t)).collect()
}

/// Accumulates into `grad` the backbone gradient given upstream gradients
/// `top_grads` with respect to the top hidden state at selected positions.
pub(crate) fn backward(
    arch: &Architecture,
    params: &[f64],
    tokens: &[TokenId],
    steps: &[Step],
    top_grads: &[(usize, Vec<f64>)],
    grad: &mut [f64],
) {
    let d = arch.embed_dim;
    let hdim = arch.hidden_dim;
    let layout = arch.layout();
    let mut mean_grads = vec![vec![0.0; d]; tokens.len()];
    for (t, dh) in top_grads {
        let t = *t;
        let step = &steps[t];
        let mut delta = dh.clone();
        for (l, layer) in layout.layers.iter().enumerate().rev() {
            let h = &step.hidden[l];
            let x = if l == 0 { &step.input } else { &step.hidden[l - 1] };
            let dz: Vec<f64> = delta.iter().zip(h).map(|(g, a)| g * (1.0 - a * a)).collect();
            let mut dx = vec![0.0; layer.fan_in];
            for i in 0..hdim {
                let row = layer.w + i * layer.fan_in;
                for j in 0..layer.fan_in {
                    grad[row + j] += dz[i] * x[j];
                    dx[j] += params[row + j] * dz[i];
                }
                grad[layer.b + i] += dz[i];
            }
            delta = dx;
        }
        let tok = tokens[t] as usize;
        for k in 0..d {
            grad[tok * d + k] += delta[k];
            mean_grads[t][k] += delta[d + k] / (t + 1) as f64;
        }
    }
    // position s contributes to the mean of every later position
    let mut acc = vec![0.0; d];
    for s in (0..tokens.len()).rev() {
        for k in 0..d {
            acc[k] += mean_grads[s][k];
        }
        let tok = tokens[s] as usize;
        for k in 0..d {
            grad[tok * d + k] += acc[k];
        }
    }
}

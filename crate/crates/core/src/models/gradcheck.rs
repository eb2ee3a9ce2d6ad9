//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Number of randomly chosen coordinates; `None` checks all of them.
    pub coordinates: Option<usize>,
    pub seed: u64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-4, coordinates: Some(64), seed: 0, floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`, maximised.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Compares the gradient returned by `loss_and_grad` at `params` against
/// central differences of its loss.
pub fn grad_check(
    params: &[f64],
    mut loss_and_grad: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    opts: GradCheckOptions,
) -> Result<GradCheckReport, ModelError> {
    let (loss, analytic) = loss_and_grad(params);
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    assert_eq!(analytic.len(), params.len(), "gradient length must match parameters");
    let n = params.len();
    let coords: Vec<usize> = match opts.coordinates {
        Some(k) if k < n => {
            let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(opts.seed), n, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };
    let mut probe = params.to_vec();
    let mut report = GradCheckReport { checked: coords.len(), max_rel_error: 0.0, max_abs_error: 0.0, worst_index: 0 };
    for &i in &coords {
        let orig = probe[i];
        probe[i] = orig + opts.step;
        let up = loss_and_grad(&probe).0;
        probe[i] = orig - opts.step;
        let down = loss_and_grad(&probe).0;
        probe[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(ModelError::NonFiniteLoss);
        }
        let numeric = (up - down) / (2.0 * opts.step);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / analytic[i].abs().max(numeric.abs()).max(opts.floor);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

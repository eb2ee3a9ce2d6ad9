use super::config::OptimizerKind;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Descent-direction optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (vec![0.0; n], vec![0.0; n]),
        };
        Self { kind, t: 0, m, v }
    }

    /// `params -= lr * update(grad)`.
    pub fn descend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - BETA1.powi(self.t);
                let c2 = 1.0 - BETA2.powi(self.t);
                for i in 0..params.len() {
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_minimize_a_bowl() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut p = vec![3.0, -2.0];
            let mut opt = Optimizer::new(kind, 2);
            for _ in 0..2000 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
                opt.descend(&mut p, &g, 0.01);
            }
            assert!(p.iter().all(|x| x.abs() < 1e-3), "{kind:?}: {p:?}");
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut p = vec![1.0, 2.0];
        Optimizer::new(OptimizerKind::Adam, 2).descend(&mut p, &[5.0, -5.0], 0.0);
        assert_eq!(p, vec![1.0, 2.0]);
    }
}

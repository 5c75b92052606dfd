use serde::{Deserialize, Serialize};

use crate::error::NeuroError;
use crate::tensor::Tensor;

/// Bias-corrected Adam with per-parameter moment accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[&Tensor], alpha: f64) -> Self {
        Self {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// Applies one update. On a non-finite gradient nothing is modified.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Vec<f64>]) -> Result<(), NeuroError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NeuroError::Contract(format!(
                "adam: {} accumulators, {} params, {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[k].len() {
                return Err(NeuroError::Contract(format!(
                    "adam: shape mismatch for parameter {k}"
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NeuroError::NonFiniteGradient { param: k });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                let gi = g[i];
                if gi == 0.0 && m[i] == 0.0 && v[i] == 0.0 {
                    continue;
                }
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= self.alpha * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_each_coordinate_by_alpha() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let mut adam = AdamState::new(&[&p], 0.01);
        adam.step(vec![&mut p], &[vec![3.0, -0.1, 40.0]]).unwrap();
        let moved = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in p.data().iter().zip(moved) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut adam = AdamState::new(&[&p], 0.1);
        adam.step(vec![&mut p], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(adam.m, vec![vec![0.0, 0.0]]);
        assert_eq!(adam.v, vec![vec![0.0, 0.0]]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut p = Tensor::vector(vec![1.0]);
        let mut adam = AdamState::new(&[&p], 0.1);
        let err = adam.step(vec![&mut p], &[vec![f64::NAN]]).unwrap_err();
        assert_eq!(err, NeuroError::NonFiniteGradient { param: 0 });
        assert_eq!(p.data(), &[1.0]);
        assert_eq!(adam.step_count, 0);
    }

    #[test]
    fn minimises_square() {
        let oracle = {
            // plain scalar recurrence of the same update rule
            let (mut x, mut m, mut v) = (5.0f64, 0.0, 0.0);
            for t in 1..=100 {
                let g = 2.0 * x;
                m = 0.9 * m + 0.1 * g;
                v = 0.999 * v + 0.001 * g * g;
                x -= 0.1 * (m / (1.0 - 0.9f64.powi(t)))
                    / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            }
            x
        };
        let mut p = Tensor::scalar(5.0);
        let mut adam = AdamState::new(&[&p], 0.1);
        let mut trace = vec![];
        for _ in 0..100 {
            let g = 2.0 * p.item();
            adam.step(vec![&mut p], &[vec![g]]).unwrap();
            trace.push(p.item().abs());
        }
        assert!(p.item().abs() < 1.0);
        assert!((p.item() - oracle).abs() < 1e-12);
        assert!(trace[49] < 5.0 && trace[99] < trace[0]);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-12 && (g[1][0] - 0.8).abs() < 1e-12);
    }
}

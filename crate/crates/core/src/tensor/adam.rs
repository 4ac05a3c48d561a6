//! Adam with bias correction, operating on a fixed list of parameters.

use super::{Tensor, TensorError};

/// Optimizer state: one pair of moment buffers per tracked parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// One bias-corrected update over `params`, in order. The parameter list
    /// must be the same (same order, same shapes) on every call. Gradients
    /// are taken from each tensor and cleared afterwards; a parameter with
    /// no accumulated gradient is treated as having gradient zero.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<(), TensorError> {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (idx, p) in params.iter_mut().enumerate() {
            let m = &mut self.first_moment[idx];
            let v = &mut self.second_moment[idx];
            if m.len() != p.len() {
                return Err(TensorError::GradLength {
                    got: p.len(),
                    expected: m.len(),
                });
            }
            {
                let zero = [];
                let grad: &[f64] = p.grad().unwrap_or(&zero);
                for i in 0..m.len() {
                    let g = if grad.is_empty() { 0.0 } else { grad[i] };
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                }
            }
            let (lr, eps) = (self.learning_rate, self.epsilon);
            p.apply_update(|i, w| {
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w - lr * m_hat / (v_hat.sqrt() + eps)
            });
            p.zero_grad();
        }
        Ok(())
    }
}

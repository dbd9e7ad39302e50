use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

/// Adam moments and hyperparameters for one flat parameter set.
///
/// Parameters are addressed in the order they are passed to [`AdamState::step`];
/// that order must stay fixed for the lifetime of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &[Tensor], learning_rate: f64) -> Self {
        Self::with_size(params.iter().map(Tensor::numel).sum(), learning_rate)
    }

    pub fn with_size(size: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; size],
            second_moment: vec![0.0; size],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Bias-corrected Adam update on raw buffers.
    pub fn update(&mut self, values: &mut [f64], grads: &[f64]) -> Result<()> {
        if values.len() != self.first_moment.len() || grads.len() != values.len() {
            return Err(TensorError::OptimizerSize {
                expected: self.first_moment.len(),
                actual: values.len().max(grads.len()),
            });
        }
        self.step_count += 1;
        let (c1, c2) = self.corrections();
        for (i, (x, &g)) in values.iter_mut().zip(grads).enumerate() {
            *x -= self.moment_step(i, g, c1, c2);
        }
        Ok(())
    }

    /// One optimizer step over `params`, reading their accumulated gradients.
    /// Parameters with no gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        let total: usize = params.iter().map(Tensor::numel).sum();
        if total != self.first_moment.len() {
            return Err(TensorError::OptimizerSize {
                expected: self.first_moment.len(),
                actual: total,
            });
        }
        self.step_count += 1;
        let (c1, c2) = self.corrections();
        let mut offset = 0;
        for p in params {
            let n = p.numel();
            let grad = p.grad().unwrap_or_else(|| vec![0.0; n]);
            p.update_data(|values| {
                for (j, (x, &g)) in values.iter_mut().zip(&grad).enumerate() {
                    *x -= self.moment_step(offset + j, g, c1, c2);
                }
            });
            offset += n;
        }
        Ok(())
    }

    fn corrections(&self) -> (f64, f64) {
        let t = self.step_count as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }

    fn moment_step(&mut self, i: usize, g: f64, c1: f64, c2: f64) -> f64 {
        let m = &mut self.first_moment[i];
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        let v = &mut self.second_moment[i];
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = self.first_moment[i] / c1;
        let v_hat = self.second_moment[i] / c2;
        self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon)
    }
}

pub fn zero_grads(params: &[Tensor]) {
    params.iter().for_each(Tensor::zero_grad);
}

use super::params::ParameterVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }

    pub fn reset(&mut self) {
        self.first_moment.fill(0.0);
        self.second_moment.fill(0.0);
        self.step_count = 0;
    }

    /// Bias-corrected Adam update applied in place.
    pub fn step(&mut self, params: &mut ParameterVector, grad: &[f64]) -> Result<()> {
        let n = params.len();
        if grad.len() != n || self.first_moment.len() != n || self.second_moment.len() != n {
            return Err(Error::Usage(format!(
                "adam step length mismatch: params {n}, grad {}, moments {}",
                grad.len(),
                self.first_moment.len()
            )));
        }
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let theta = params.as_mut_slice();
        for i in 0..n {
            let g = grad[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            theta[i] -= alpha * (m / c1) / ((v / c2).sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    params: &ParameterVector,
    grad: &[f64],
    state: &AdamState,
) -> Result<(ParameterVector, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.step(&mut p, grad)?;
    Ok((p, s))
}

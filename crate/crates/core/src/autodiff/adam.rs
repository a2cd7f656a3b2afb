//! Adam optimizer over flat parameter vectors.

use crate::error::{Error, Result};

/// First and second moment estimates plus hyperparameters for Adam.
///
/// Defaults follow the common setting: beta1 = 0.9, beta2 = 0.999,
/// eps = 1e-8. Bias correction is applied at every step.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One Adam update in place:
    ///   m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
    ///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam state holds {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient component {} is {}",
                bad, grads[bad]
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

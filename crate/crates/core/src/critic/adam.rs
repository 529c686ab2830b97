use serde::{Deserialize, Serialize};

use super::CriticError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub lr: f64,
    /// Decoupled, applied as `p -= lr * weight_decay * p`.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { lr: 5e-4, weight_decay: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err("learning.lr must be positive".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err("learning.weight_decay must be >= 0".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err("learning betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return Err("learning.eps must be positive".into());
        }
        Ok(())
    }
}

/// Moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], hp: &AdamParams) -> Result<(), CriticError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CriticError::Dimension(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(CriticError::NonFinite(format!("gradient at parameter {i}")));
        }
        self.t += 1;
        let c1 = 1.0 - hp.beta1.powf(self.t as f64);
        let c2 = 1.0 - hp.beta2.powf(self.t as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            let update = (*m / c1) / ((*v / c2).sqrt() + hp.eps);
            *p -= hp.lr * (update + hp.weight_decay * *p);
        }
        Ok(())
    }
}

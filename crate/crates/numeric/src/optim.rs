//! Adam with bias correction plus the Noam learning-rate schedule.

use std::collections::HashMap;

use crate::tensor::Tensor;
use crate::{NumericError, Result, VisitParams};

/// lr = factor · model_dim^(−1/2) · min(step^(−1/2), step · warmup^(−3/2)).
/// Rises linearly to the peak at `step == warmup`, then decays as step^(−1/2).
pub fn noam_lr(step: u64, factor: f64, model_dim: usize, warmup: u64) -> f64 {
    debug_assert!(step >= 1, "noam_lr steps are 1-based");
    let s = step as f64;
    let w = warmup as f64;
    factor * (model_dim as f64).powf(-0.5) * (s.powf(-0.5)).min(s * w.powf(-1.5))
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam state: first/second moment accumulators per named parameter plus the
/// shared step counter. Parameters without a gradient are left untouched.
#[derive(Debug, Default)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, moments: HashMap::new() }
    }

    /// One update over every parameter that currently holds a gradient.
    /// Any non-finite gradient aborts the whole step before any parameter
    /// has been touched, reporting the offending parameter by name.
    pub fn step(&mut self, model: &mut impl VisitParams, lr: f64) -> Result<()> {
        let mut bad: Option<String> = None;
        model.visit_params(&mut |name, t| {
            if bad.is_none() {
                if let Some(grad) = t.grad() {
                    if grad.iter().any(|v| !v.is_finite()) {
                        bad = Some(name.to_string());
                    }
                }
            }
        });
        if let Some(name) = bad {
            return Err(NumericError::NonFiniteGrad(name));
        }

        self.step += 1;
        let t = self.step as f64;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);

        let moments = &mut self.moments;
        model.visit_params_mut(&mut |name, p| {
            let Some(grad) = p.grad() else { return };
            let grad = grad.to_vec();
            let n = p.numel();
            let (m, v) = moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            debug_assert_eq!(m.len(), n, "moment dims must match parameter dims");
            let data = p.data_mut();
            for i in 0..n {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        });
        Ok(())
    }

    pub fn moments(&self) -> &HashMap<String, (Vec<f64>, Vec<f64>)> {
        &self.moments
    }

    pub fn set_moment(&mut self, name: String, m: Vec<f64>, v: Vec<f64>) {
        self.moments.insert(name, (m, v));
    }
}

/// A free-standing parameter list, handy for tests and simple models.
#[derive(Debug, Default)]
pub struct ParamList {
    pub entries: Vec<(String, Tensor)>,
}

impl VisitParams for ParamList {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (n, t) in &self.entries {
            f(n, t);
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (n, t) in &mut self.entries {
            f(n, t);
        }
    }
}

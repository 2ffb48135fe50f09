use serde::{Deserialize, Serialize};

use super::Parameter;
use crate::error::{Error, Result};

/// Adam hyper-parameters plus the shared step counter.
///
/// Weight decay is the classic L2 form: `weight_decay * value` is added to
/// the gradient before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub step_count: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 1e-4, step_count: 0 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.lr > 0.0
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// One bias-corrected Adam update over `params`; gradients are zeroed afterwards.
pub fn adam_step<'a>(params: impl IntoIterator<Item = &'a mut Parameter>, cfg: &mut AdamConfig) {
    cfg.step_count += 1;
    let t = cfg.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in params {
        let Parameter { value, grad, adam_m, adam_v, .. } = p;
        for (((w, g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut().iter_mut())
            .zip(adam_m.data_mut().iter_mut())
            .zip(adam_v.data_mut().iter_mut())
        {
            let gd = *g + cfg.weight_decay * *w;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gd;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gd * gd;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            *g = 0.0;
        }
    }
}

//! Adam with bias correction, and the cosine learning-rate schedule.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::models::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments for one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: ParamStore,
    pub second_moment: ParamStore,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        Self { config, first_moment: params.zeros_like(), second_moment: params.zeros_like(), step_count: 0 }
    }

    /// One update of every tensor in `params`; `grads` follows store order.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Vec<f32>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(dim_err!(
                "adam: {} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                self.first_moment.len()
            ));
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {lr} must be finite and non-negative")));
        }
        self.step_count += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        let moments = self.first_moment.tensors_mut().zip(self.second_moment.tensors_mut());
        for ((p, g), (m, v)) in params.tensors_mut().zip(grads).zip(moments) {
            if g.len() != p.numel() {
                return Err(dim_err!("adam: gradient of {} values for tensor {:?}", g.len(), p.shape()));
            }
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
                let g = f64::from(g);
                let mn = beta1 * f64::from(*m) + (1.0 - beta1) * g;
                let vn = beta2 * f64::from(*v) + (1.0 - beta2) * g * g;
                *m = mn as f32;
                *v = vn as f32;
                let update = lr * (mn / c1) / (libm::sqrt(vn / c2) + eps);
                *p = (f64::from(*p) - update) as f32;
            }
        }
        Ok(())
    }
}

/// `lr(t) = ½·lr0·(1 + cos(π·(t mod t_max)/t_max))`, restarting every
/// `t_max` steps.
pub fn cosine_lr(t: u64, lr0: f64, t_max: u64) -> f64 {
    if t_max == 0 {
        return lr0;
    }
    let phase = (t % t_max) as f64 / t_max as f64;
    0.5 * lr0 * (1.0 + libm::cos(core::f64::consts::PI * phase))
}

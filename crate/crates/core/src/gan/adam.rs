use crate::autodiff::ParamSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, dim: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// One bias-corrected update of `params` along `grad` (flat layout).
    pub fn step(&mut self, params: &mut ParamSet, grad: &[f64]) -> Result<()> {
        if grad.len() != self.m.len() || params.total_dim() != self.m.len() {
            return Err(Error::invalid(format!(
                "Adam state has {} entries, got {} gradients for {} parameters",
                self.m.len(),
                grad.len(),
                params.total_dim()
            )));
        }
        if self.cfg.lr == 0.0 {
            return Ok(());
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let mut flat = params.flatten();
        for i in 0..flat.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            flat[i] -= lr * mh / (vh.sqrt() + eps);
        }
        params.assign_flat(&flat)
    }
}

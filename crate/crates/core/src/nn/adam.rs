//! Adam optimizer.

use serde::{Deserialize, Serialize};

use super::Param;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        // Translation-GAN conventions.
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One optimizer instance per network; `t` counts steps for bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, t: 0 }
    }

    pub fn step<F: Scalar>(&mut self, params: &mut [(String, &mut Param<F>)]) {
        self.t += 1;
        let lr = F::of(self.cfg.lr);
        let b1 = F::of(self.cfg.beta1);
        let b2 = F::of(self.cfg.beta2);
        let eps = F::of(self.cfg.eps);
        let bc1 = F::of(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = F::of(1.0 - self.cfg.beta2.powi(self.t as i32));
        let one = F::one();
        for (_, p) in params.iter_mut() {
            let g = p.grad.view();
            ndarray::Zip::from(&mut p.m).and(&g).for_each(|m, &gv| {
                *m = b1 * *m + (one - b1) * gv;
            });
            ndarray::Zip::from(&mut p.v).and(&g).for_each(|v, &gv| {
                *v = b2 * *v + (one - b2) * gv * gv;
            });
            ndarray::Zip::from(&mut p.value)
                .and(&p.m)
                .and(&p.v)
                .for_each(|w, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

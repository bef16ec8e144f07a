//! AdamW with decoupled weight decay and a cosine schedule with warm restarts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// One AdamW update of a parameter slice. `step` is the 1-based step count
/// used for bias correction.
pub fn adamw_step(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], step: u64, config: &AdamWConfig, lr: f64) {
    debug_assert!(step >= 1);
    let bc1 = 1.0 - config.beta1.powi(step as i32);
    let bc2 = 1.0 - config.beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        let theta = params[i];
        params[i] = theta - lr * (m_hat / (v_hat.sqrt() + config.eps)) - lr * config.weight_decay * theta;
    }
}

/// Moment buffers for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut [f64]>, grads: impl IntoIterator<Item = &'a [f64]>, lr: f64) {
        self.step += 1;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            adamw_step(p, g, &mut self.m[k], &mut self.v[k], self.step, &self.config, lr);
        }
    }
}

/// Cosine annealing with warm restarts: periods `t0, t0 * mult, ...`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineWarmRestarts {
    pub lr_max: f64,
    pub lr_min: f64,
    pub t0: usize,
    pub mult: usize,
}

impl CosineWarmRestarts {
    /// Learning rate at a (possibly fractional) epoch.
    pub fn lr_at(&self, epoch: f64) -> f64 {
        let mut period = self.t0.max(1) as f64;
        let mut start = 0.0;
        while epoch >= start + period {
            start += period;
            period *= self.mult.max(1) as f64;
        }
        let t_cur = epoch - start;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (PI * t_cur / period).cos())
    }
}

pub fn cosine_warm_restart_lr(epoch: usize, schedule: &CosineWarmRestarts) -> f64 {
    schedule.lr_at(epoch as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_unit_normalized() {
        let mut p = [0.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, &[1.0], &mut m, &mut v, 1, &cfg, 0.1);
        assert_eq!(p[0], -0.1 * (1.0 / (1.0 + 1e-8)));
    }

    #[test]
    fn pure_decoupled_decay() {
        let mut p = [1.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, &[0.0], &mut m, &mut v, 1, &cfg, 0.1);
        assert!((p[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn descends_a_parabola() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, [1]);
        let mut theta = vec![1.0];
        for _ in 0..100 {
            let g = vec![2.0 * theta[0]];
            opt.step([theta.as_mut_slice()], [g.as_slice()], 0.05);
        }
        assert!(theta[0].abs() < 0.05, "{}", theta[0]);
        assert_eq!(opt.steps_taken(), 100);
    }

    #[test]
    fn schedule_shape() {
        let s = CosineWarmRestarts {
            lr_max: 1e-2,
            lr_min: 1e-4,
            t0: 10,
            mult: 2,
        };
        assert_eq!(cosine_warm_restart_lr(0, &s), 1e-2);
        assert!((s.lr_at(10.0 - 1e-9) - 1e-4).abs() < 1e-12);
        assert_eq!(cosine_warm_restart_lr(10, &s), 1e-2);
        assert!((s.lr_at(30.0 - 1e-9) - 1e-4).abs() < 1e-12);
        assert_eq!(cosine_warm_restart_lr(30, &s), 1e-2);
        let mid = cosine_warm_restart_lr(5, &s);
        assert!((mid - (1e-4 + 0.5 * (1e-2 - 1e-4))).abs() < 1e-15);
        assert!(cosine_warm_restart_lr(20, &s) < cosine_warm_restart_lr(15, &s));
    }
}

//! Exact Gaussian process regression on scalar inputs with a constant mean
//! and a squared-exponential (RBF) kernel.
//!
//! Hyperparameters are fitted by maximizing the log marginal likelihood
//! with multi-start BFGS in `(ln sv, ln l)`, using analytic gradients
//!
//! ```text
//! d LML / d theta = 1/2 tr((alpha alpha^T - K^-1) dK/d theta)
//! ```

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Upper limit of jitter escalation, relative to the signal variance.
const MAX_RELATIVE_JITTER: f64 = 1e-6;

/// Squared-exponential covariance `sv * exp(-|a - b|^2 / (2 l^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub signal_variance: f64,
    pub length_scale: f64,
}

impl RbfKernel {
    pub fn new(signal_variance: f64, length_scale: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(signal_variance) || !ok(length_scale) {
            return Err(Error::Config(format!(
                "kernel parameters must be positive and finite (sv = {signal_variance}, l = {length_scale})"
            )));
        }
        Ok(Self {
            signal_variance,
            length_scale,
        })
    }

    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.signal_variance * (-(d * d) / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn gram(&self, inputs: &[f64]) -> DMatrix<f64> {
        let n = inputs.len();
        DMatrix::from_fn(n, n, |i, j| self.eval(inputs[i], inputs[j]))
    }
}

pub fn rbf_kernel(kernel: &RbfKernel, mu: f64, mu_prime: f64) -> f64 {
    kernel.eval(mu, mu_prime)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprConfig {
    /// Diagonal jitter. `None` uses `1e-8` times the target variance.
    pub jitter: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            jitter: None,
            restarts: 8,
            seed: 0,
        }
    }
}

/// Posterior mean and variance at one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    /// Two-sided 95% interval, `mean -/+ 1.96 sd`.
    pub fn ci95(&self) -> (f64, f64) {
        let half = 1.96 * self.variance.sqrt();
        (self.mean - half, self.mean + half)
    }
}

/// A conditioned Gaussian process. Immutable once built.
#[derive(Clone, Debug)]
pub struct GprModel {
    train_inputs: Vec<f64>,
    train_targets: Vec<f64>,
    mean_constant: f64,
    kernel: RbfKernel,
    jitter: f64,
    chol_factor: DMatrix<f64>,
    alpha: DVector<f64>,
    log_det: f64,
}

impl GprModel {
    /// Condition a GP on data with fixed hyperparameters. The mean constant
    /// is the arithmetic mean of the targets. No jitter escalation.
    pub fn with_hyperparameters(inputs: &[f64], targets: &[f64], kernel: RbfKernel, jitter: f64) -> Result<Self> {
        validate_data(inputs, targets)?;
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::Config(format!("jitter must be >= 0, got {jitter}")));
        }
        if jitter == 0.0 && has_duplicates(inputs) {
            return Err(Error::SingularMatrix("duplicate inputs with zero jitter".into()));
        }
        let mean_constant = mean(targets);
        let chol = factor(&kernel, inputs, jitter).ok_or_else(|| {
            Error::SingularMatrix(format!(
                "Cholesky failed for sv = {}, l = {}, jitter = {jitter}",
                kernel.signal_variance, kernel.length_scale
            ))
        })?;
        let resid = DVector::from_iterator(targets.len(), targets.iter().map(|y| y - mean_constant));
        let alpha = chol.solve(&resid);
        let chol_factor = chol.l();
        let log_det = 2.0 * chol_factor.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            train_inputs: inputs.to_vec(),
            train_targets: targets.to_vec(),
            mean_constant,
            kernel,
            jitter,
            chol_factor,
            alpha,
            log_det,
        })
    }

    pub fn train_inputs(&self) -> &[f64] {
        &self.train_inputs
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.train_targets
    }

    pub fn mean_constant(&self) -> f64 {
        self.mean_constant
    }

    pub fn kernel(&self) -> RbfKernel {
        self.kernel
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular Cholesky factor of `K + jitter I`.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol_factor
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Posterior of the latent function at `mu` (same input scaling as the
    /// training inputs). The variance excludes the jitter term.
    pub fn predict(&self, mu: f64) -> Posterior {
        let n = self.train_inputs.len();
        let k_star = DVector::from_iterator(n, self.train_inputs.iter().map(|&x| self.kernel.eval(mu, x)));
        let mean = self.mean_constant + k_star.dot(&self.alpha);
        let v = self
            .chol_factor
            .solve_lower_triangular(&k_star)
            .expect("Cholesky factor has a positive diagonal");
        let variance = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        Posterior { mean, variance }
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.train_inputs.len() as f64;
        let fit: f64 = self
            .train_targets
            .iter()
            .zip(self.alpha.iter())
            .map(|(y, a)| (y - self.mean_constant) * a)
            .sum();
        -0.5 * fit - 0.5 * self.log_det - 0.5 * n * LN_2PI
    }
}

pub fn predict_gpr(model: &GprModel, mu_star: f64) -> Posterior {
    model.predict(mu_star)
}

pub fn log_marginal_likelihood(model: &GprModel) -> f64 {
    model.log_marginal_likelihood()
}

fn validate_data(inputs: &[f64], targets: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("GP needs at least one training point".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    if inputs.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::Config("GP training data must be finite".into()));
    }
    Ok(())
}

fn has_duplicates(inputs: &[f64]) -> bool {
    inputs.iter().enumerate().any(|(i, x)| inputs[..i].contains(x))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn factor(kernel: &RbfKernel, inputs: &[f64], jitter: f64) -> Option<Cholesky<f64, Dyn>> {
    let mut k = kernel.gram(inputs);
    for i in 0..inputs.len() {
        k[(i, i)] += jitter;
    }
    Cholesky::new(k)
}

/// Negative LML and its gradient in `(ln sv, ln l)` for fixed jitter.
struct Objective<'a> {
    inputs: &'a [f64],
    resid: DVector<f64>,
    jitter: f64,
}

impl Objective<'_> {
    fn eval(&self, theta: [f64; 2]) -> Option<(f64, [f64; 2])> {
        let kernel = RbfKernel {
            signal_variance: theta[0].exp(),
            length_scale: theta[1].exp(),
        };
        let n = self.inputs.len();
        let chol = factor(&kernel, self.inputs, self.jitter)?;
        let alpha = chol.solve(&self.resid);
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let lml = -0.5 * self.resid.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
        if !lml.is_finite() {
            return None;
        }
        let k_inv = chol.inverse();
        let ell2 = kernel.length_scale * kernel.length_scale;
        let (mut g_sv, mut g_ell) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let w = alpha[i] * alpha[j] - k_inv[(i, j)];
                let kf = kernel.eval(self.inputs[i], self.inputs[j]);
                let d = self.inputs[i] - self.inputs[j];
                g_sv += w * kf;
                g_ell += w * kf * d * d / ell2;
            }
        }
        Some((-lml, [-0.5 * g_sv, -0.5 * g_ell]))
    }
}

#[derive(Clone, Copy)]
struct SearchBox {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl SearchBox {
    fn clamp(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0].clamp(self.lo[0], self.hi[0]), x[1].clamp(self.lo[1], self.hi[1])]
    }

    /// Gradient with components that push against an active bound removed.
    fn projected(&self, x: [f64; 2], g: [f64; 2]) -> [f64; 2] {
        let mut p = g;
        for k in 0..2 {
            if (x[k] <= self.lo[k] && g[k] > 0.0) || (x[k] >= self.hi[k] && g[k] < 0.0) {
                p[k] = 0.0;
            }
        }
        p
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Box-clamped BFGS minimization. Returns the best point and its value.
fn minimize(obj: &Objective, bounds: SearchBox, start: [f64; 2]) -> Option<([f64; 2], f64)> {
    const MAX_ITER: usize = 300;
    const MAX_STEP: f64 = 2.0;
    let mut x = bounds.clamp(start);
    let (mut f, mut g) = obj.eval(x)?;
    let mut h = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..MAX_ITER {
        let pg = bounds.projected(x, g);
        if pg[0].abs().max(pg[1].abs()) < 1e-10 {
            break;
        }
        let mut d = [-(h[0][0] * g[0] + h[0][1] * g[1]), -(h[1][0] * g[0] + h[1][1] * g[1])];
        if dot(d, g) >= 0.0 {
            h = [[1.0, 0.0], [0.0, 1.0]];
            d = [-g[0], -g[1]];
        }
        let norm = dot(d, d).sqrt();
        if norm > MAX_STEP {
            d = [d[0] * MAX_STEP / norm, d[1] * MAX_STEP / norm];
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let trial = bounds.clamp([x[0] + step * d[0], x[1] + step * d[1]]);
            let s = [trial[0] - x[0], trial[1] - x[1]];
            if let Some((ft, gt)) = obj.eval(trial) {
                if ft <= f + 1e-4 * dot(g, s) {
                    accepted = Some((trial, ft, gt, s));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new, s)) = accepted else {
            break;
        };
        if dot(s, s) == 0.0 {
            break;
        }
        let y = [g_new[0] - g[0], g_new[1] - g[1]];
        let sy = dot(s, y);
        if sy > 1e-14 {
            // H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let rho = 1.0 / sy;
            let hy = [h[0][0] * y[0] + h[0][1] * y[1], h[1][0] * y[0] + h[1][1] * y[1]];
            let yhy = dot(y, hy);
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
    Some((x, f))
}

/// Fit a GP by maximizing the log marginal likelihood from `restarts`
/// seeded starting points.
pub fn fit_gpr(inputs: &[f64], targets: &[f64], config: &GprConfig) -> Result<GprModel> {
    validate_data(inputs, targets)?;
    let m = mean(targets);
    let resid = DVector::from_iterator(targets.len(), targets.iter().map(|y| y - m));
    let variance = resid.norm_squared() / targets.len() as f64;
    let var_scale = if variance > 0.0 { variance } else { 1.0 };
    let (lo, hi) = inputs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = if hi > lo { hi - lo } else { 1.0 };

    let mut jitter = match config.jitter {
        Some(j) if !(j >= 0.0 && j.is_finite()) => {
            return Err(Error::Config(format!("jitter must be >= 0, got {j}")));
        }
        Some(j) => j,
        None => 1e-8 * var_scale,
    };
    if jitter == 0.0 && has_duplicates(inputs) {
        return Err(Error::SingularMatrix("duplicate inputs with zero jitter".into()));
    }

    let bounds = SearchBox {
        lo: [(1e-6 * var_scale).ln(), (1e-3 * range).ln()],
        hi: [(1e6 * var_scale).ln(), (1e3 * range).ln()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<[f64; 2]> = (0..config.restarts.max(1))
        .map(|_| {
            let sv = rng.random_range(0.1..=10.0) * var_scale;
            let ell = rng.random_range(0.05..=2.0) * range;
            [sv.ln(), ell.ln()]
        })
        .collect();

    let sv_ceiling = bounds.hi[0].exp();
    loop {
        let obj = Objective {
            inputs,
            resid: resid.clone(),
            jitter,
        };
        let best = starts
            .iter()
            .filter_map(|&s| minimize(&obj, bounds, s))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((theta, _)) = best {
            let kernel = RbfKernel::new(theta[0].exp(), theta[1].exp())?;
            return condition_with_escalation(inputs, targets, kernel, jitter);
        }
        jitter = if jitter == 0.0 { 1e-12 * var_scale } else { jitter * 10.0 };
        if jitter > MAX_RELATIVE_JITTER * sv_ceiling {
            return Err(Error::Conditioning {
                mode: None,
                message: "no starting point produced a positive definite kernel matrix".into(),
            });
        }
    }
}

fn condition_with_escalation(inputs: &[f64], targets: &[f64], kernel: RbfKernel, jitter: f64) -> Result<GprModel> {
    let limit = MAX_RELATIVE_JITTER * kernel.signal_variance;
    let mut j = jitter;
    loop {
        match GprModel::with_hyperparameters(inputs, targets, kernel, j) {
            Ok(model) => return Ok(model),
            Err(Error::SingularMatrix(msg)) => {
                j = if j == 0.0 { 1e-12 * kernel.signal_variance } else { j * 10.0 };
                if j > limit {
                    return Err(Error::Conditioning { mode: None, message: msg });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

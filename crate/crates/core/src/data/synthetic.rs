//! Closed-form distortion generator on a structured cylinder mesh.
//!
//! The field after step `n` at a node `p = (x, y, z)` deposited in layer `l` is
//!
//! ```text
//! u_n(p; dt) = A(dt) * (z / H) * (r / R) * (1 + 0.3 cos(theta)) * s(n, l) + noise
//! A(dt)      = 0.08 + 0.12 exp(-dt / 30)
//! s(n, l)    = 0                          if l > n
//!            = 1 - exp(-(n - l + 1) / 8)  otherwise
//! ```
//!
//! It decreases with dwell time and accumulates with deposition steps, and
//! is used as ground truth throughout the test suites.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{MeshGeometry, ParameterPoint, SnapshotMatrix, SnapshotTensor};
use crate::error::{Error, Result};

/// Cylinder radius in mm.
pub const CYLINDER_RADIUS: f64 = 5.0;
/// Height added per deposited layer, mm.
pub const LAYER_THICKNESS: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_radial: usize,
    pub n_theta: usize,
    pub n_layers: usize,
    pub dwell_times: Vec<f64>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_radial < 2 || self.n_theta < 4 || self.n_layers < 2 {
            return Err(Error::Config(format!(
                "need n_radial >= 2, n_theta >= 4, n_layers >= 2 (got {}, {}, {})",
                self.n_radial, self.n_theta, self.n_layers
            )));
        }
        if self.dwell_times.is_empty() {
            return Err(Error::Config("dwell_times is empty".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        for (i, &dt) in self.dwell_times.iter().enumerate() {
            ParameterPoint::new(dt)?;
            if self.dwell_times[..i].contains(&dt) {
                return Err(Error::DuplicateParameter(dt));
            }
        }
        Ok(())
    }
}

/// Dwell-time dependent amplitude in mm.
pub fn amplitude(dwell_time: f64) -> f64 {
    0.08 + 0.12 * (-dwell_time / 30.0).exp()
}

/// Build-up factor of a node in `layer` after deposition step `step`.
pub fn step_factor(step: usize, layer: usize) -> f64 {
    if layer > step {
        0.0
    } else {
        1.0 - (-((step - layer + 1) as f64) / 8.0).exp()
    }
}

/// Noise-free distortion at one node. `height` is the total part height.
pub fn oracle_distortion(coords: [f64; 3], layer: usize, step: usize, dwell_time: f64, height: f64) -> f64 {
    let [x, y, z] = coords;
    let r = x.hypot(y);
    let cos_theta = if r > 0.0 { x / r } else { 1.0 };
    amplitude(dwell_time) * (z / height) * (r / CYLINDER_RADIUS) * (1.0 + 0.3 * cos_theta) * step_factor(step, layer)
}

/// Cylinder with `n_layers + 1` rings of `n_radial * n_theta` nodes each.
/// Ring 0 sits on the build plate; ring `k >= 1` tops layer `k - 1`.
fn cylinder_mesh(n_radial: usize, n_theta: usize, n_layers: usize) -> Result<MeshGeometry> {
    let per_ring = n_radial * n_theta;
    let idx = |k: usize, i: usize, j: usize| k * per_ring + i * n_theta + j;
    let mut coords = Vec::with_capacity(per_ring * (n_layers + 1));
    let mut layers = Vec::with_capacity(coords.capacity());
    let mut edges = Vec::new();
    for k in 0..=n_layers {
        let z = k as f64 * LAYER_THICKNESS;
        for i in 0..n_radial {
            let r = CYLINDER_RADIUS * (i + 1) as f64 / n_radial as f64;
            for j in 0..n_theta {
                let theta = 2.0 * PI * j as f64 / n_theta as f64;
                coords.push([r * theta.cos(), r * theta.sin(), z]);
                layers.push(k.saturating_sub(1));
                edges.push((idx(k, i, j), idx(k, i, (j + 1) % n_theta)));
                if i + 1 < n_radial {
                    edges.push((idx(k, i, j), idx(k, i + 1, j)));
                }
                if k < n_layers {
                    edges.push((idx(k, i, j), idx(k + 1, i, j)));
                }
            }
        }
    }
    MeshGeometry::new(coords, layers, edges)
}

pub fn generate_synthetic_dataset(config: &SyntheticConfig) -> Result<SnapshotTensor> {
    config.validate()?;
    let mesh = cylinder_mesh(config.n_radial, config.n_theta, config.n_layers)?;
    let height = config.n_layers as f64 * LAYER_THICKNESS;
    let n_steps = config.n_layers;
    let n_nodes = mesh.n_nodes();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;

    let mut matrices = Vec::with_capacity(config.dwell_times.len());
    for &dt in &config.dwell_times {
        let mut values = DMatrix::zeros(n_nodes, n_steps);
        for p in 0..n_nodes {
            let c = mesh.node_coords()[p];
            let layer = mesh.layer_index()[p];
            for n in 0..n_steps {
                let mut u = oracle_distortion(c, layer, n, dt, height);
                if config.noise_sigma > 0.0 {
                    u += noise.sample(&mut rng);
                }
                values[(p, n)] = u;
            }
        }
        matrices.push(SnapshotMatrix::new(values, ParameterPoint::new(dt)?)?);
    }
    SnapshotTensor::new(Arc::new(mesh), n_steps, matrices)
}

//! Reference implementations used to check the library. None of these call
//! into the code under test for the quantity being checked.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romforge::data::{generate_synthetic_dataset, parse_dwell_list, split_dataset, SnapshotTensor, SyntheticConfig};
use romforge::gca::{gca_backward, gca_forward, gca_loss, GcaModel, GcaSample, Graph};

pub const TRAIN_DTS: [f64; 9] = [20.0, 25.0, 35.0, 40.0, 50.0, 55.0, 65.0, 70.0, 80.0];
pub const TEST_DTS: [f64; 4] = [30.0, 45.0, 60.0, 75.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Cylinder dataset with 1560 nodes and 12 steps over dwell times 20..80.
pub fn cylinder_dataset() -> SnapshotTensor {
    generate_synthetic_dataset(&SyntheticConfig {
        n_radial: 5,
        n_theta: 24,
        n_layers: 12,
        dwell_times: parse_dwell_list("20:80:5").unwrap(),
        noise_sigma: 0.0,
        seed: 0,
    })
    .unwrap()
}

pub fn standard_split(data: &SnapshotTensor) -> (SnapshotTensor, SnapshotTensor) {
    split_dataset(data, &TRAIN_DTS, &TEST_DTS).unwrap()
}

/// Thin SVD by one-sided Jacobi rotations (Hestenes). Returns left singular
/// vectors for the nonzero singular values, in descending order.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut u = a.clone();
    let n = u.ncols();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.nrows() {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut cols: Vec<(f64, DVector<f64>)> = u
        .column_iter()
        .map(|c| {
            let s = c.norm();
            (s, c.clone_owned())
        })
        .collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let smax = cols[0].0;
    let kept: Vec<_> = cols.into_iter().filter(|(s, _)| *s > 1e-10 * smax).collect();
    let mut left = DMatrix::zeros(a.nrows(), kept.len());
    for (k, (s, c)) in kept.iter().enumerate() {
        left.set_column(k, &(c / *s));
    }
    (left, kept.iter().map(|(s, _)| *s).collect())
}

/// Subtract the mean column.
pub fn center_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = a.column_mean();
    let mut out = a.clone();
    for mut c in out.column_iter_mut() {
        c -= &mean;
    }
    out
}

pub fn rbf(sv: f64, l: f64, a: f64, b: f64) -> f64 {
    sv * (-(a - b) * (a - b) / (2.0 * l * l)).exp()
}

/// GP posterior through an explicit inverse of `K + jitter I`, with a
/// constant mean equal to the target average. Variance excludes jitter.
pub struct DenseGp {
    x: Vec<f64>,
    m: f64,
    sv: f64,
    l: f64,
    k_inv: DMatrix<f64>,
    resid: DVector<f64>,
    log_det: f64,
}

impl DenseGp {
    pub fn new(x: &[f64], y: &[f64], sv: f64, l: f64, jitter: f64) -> Self {
        let n = x.len();
        let m = y.iter().sum::<f64>() / n as f64;
        let k = DMatrix::from_fn(n, n, |i, j| rbf(sv, l, x[i], x[j]) + if i == j { jitter } else { 0.0 });
        let log_det = k.clone().lu().determinant().ln();
        let k_inv = k.try_inverse().expect("invertible kernel matrix");
        let resid = DVector::from_iterator(n, y.iter().map(|v| v - m));
        Self {
            x: x.to_vec(),
            m,
            sv,
            l,
            k_inv,
            resid,
            log_det,
        }
    }

    pub fn predict(&self, xs: f64) -> (f64, f64) {
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|&xi| rbf(self.sv, self.l, xi, xs)));
        let mean = self.m + (ks.transpose() * &self.k_inv * &self.resid)[(0, 0)];
        let var = self.sv - (ks.transpose() * &self.k_inv * &ks)[(0, 0)];
        (mean, var)
    }

    pub fn lml(&self) -> f64 {
        let n = self.x.len() as f64;
        let quad = (self.resid.transpose() * &self.k_inv * &self.resid)[(0, 0)];
        -0.5 * quad - 0.5 * self.log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Central finite difference of `f` with respect to every entry of `x`.
pub fn central_difference(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(x);
        x[i] = orig - h;
        let fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Mismatch between two gradient vectors, relative to their size.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|b| b * b).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// 12-node graph: a ring with two chords.
pub fn twelve_node_edges() -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = (0..12).map(|i| (i, (i + 1) % 12)).map(|(a, b)| (a.min(b), a.max(b))).collect();
    e.push((0, 6));
    e.push((3, 9));
    e
}

/// Ring-with-chords graph on 12 nodes.
pub fn twelve_node_graph() -> Graph {
    Graph::from_edges(12, &twelve_node_edges()).unwrap()
}

/// Two random samples on `n` nodes with targets distinct from inputs.
pub fn random_batch(n: usize, seed: u64) -> Vec<GcaSample> {
    let mut r = rng(seed);
    (0..2)
        .map(|k| GcaSample {
            input: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
            target: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
            dwell_time: 0.25 + 0.5 * k as f64,
        })
        .collect()
}

/// Batch-mean loss built from the forward pass and the loss formula.
pub fn batch_loss(model: &GcaModel, graph: &Graph, batch: &[GcaSample], lambda: f64) -> f64 {
    batch
        .iter()
        .map(|s| {
            let out = gca_forward(model, graph, &s.input, s.dwell_time).unwrap();
            gca_loss(&s.target, &out.x_hat, &out.z, &out.z_p, lambda).total
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Relative error between the analytic gradient and central differences
/// (step `h`), one entry per named parameter tensor.
pub fn gradient_check(model: &GcaModel, graph: &Graph, batch: &[GcaSample], lambda: f64, h: f64) -> Vec<(String, f64)> {
    let (_, grads) = gca_backward(model, graph, batch, lambda).unwrap();
    let names: Vec<String> = grads.named_tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.as_slice().to_vec()).collect();
    let mut m = model.clone();
    let mut out = Vec::new();
    for (t, name) in names.into_iter().enumerate() {
        let len = analytic[t].len();
        let mut numeric = vec![0.0; len];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = m.params.tensors_mut()[t].as_slice()[k];
            m.params.tensors_mut()[t].as_mut_slice()[k] = orig + h;
            let fp = batch_loss(&m, graph, batch, lambda);
            m.params.tensors_mut()[t].as_mut_slice()[k] = orig - h;
            let fm = batch_loss(&m, graph, batch, lambda);
            m.params.tensors_mut()[t].as_mut_slice()[k] = orig;
            *slot = (fp - fm) / (2.0 * h);
        }
        out.push((name, relative_error(&analytic[t], &numeric)));
    }
    out
}

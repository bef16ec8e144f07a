//! Proper orthogonal decomposition by the method of snapshots.
//!
//! The basis comes from the eigendecomposition of the `m x m` Gram matrix of
//! the centered snapshots rather than the `N_h x N_h` covariance; both give
//! the same modes, and `m` (number of snapshots) is small.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const BASIS_MAGIC: &[u8; 4] = b"PODB";
pub const BASIS_VERSION: u8 = 1;

/// Singular values below this fraction of the largest never yield a mode.
pub const RELATIVE_SV_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PodOptions {
    pub energy_threshold: f64,
    /// Subtract the column mean before decomposing. With `false` the
    /// reference field is zero.
    pub center: bool,
}

impl PodOptions {
    pub fn new(energy_threshold: f64) -> Self {
        Self {
            energy_threshold,
            center: true,
        }
    }
}

/// Truncated orthonormal basis with its reference field.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    modes: DMatrix<f64>,
    singular_values: Vec<f64>,
    reference: DVector<f64>,
    energy_captured: f64,
}

/// Coordinates of a field in a [`PodBasis`].
#[derive(Clone, Debug, PartialEq)]
pub struct PodCoefficients {
    pub values: Vec<f64>,
}

impl PodCoefficients {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fraction of the total squared singular values held by the first `r`.
pub fn energy_fraction(singular_values: &[f64], r: usize) -> Result<f64> {
    if r == 0 || r > singular_values.len() {
        return Err(Error::Index {
            index: r,
            len: singular_values.len(),
        });
    }
    let mut partial = 0.0;
    let mut total = 0.0;
    for (j, s) in singular_values.iter().enumerate() {
        total += s * s;
        if j < r {
            partial = total;
        }
    }
    if total == 0.0 {
        return Err(Error::Degenerate("all singular values are zero".into()));
    }
    Ok(partial / total)
}

/// POD of the columns of `snapshots` (`N_h x m`) with mean centering.
pub fn compute_pod(snapshots: &DMatrix<f64>, energy_threshold: f64) -> Result<PodBasis> {
    compute_pod_with(snapshots, &PodOptions::new(energy_threshold))
}

pub fn compute_pod_with(snapshots: &DMatrix<f64>, options: &PodOptions) -> Result<PodBasis> {
    let (n_h, m) = snapshots.shape();
    if m == 0 || n_h == 0 {
        return Err(Error::EmptyInput("snapshot matrix has no columns".into()));
    }
    let threshold = options.energy_threshold;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("energy threshold must be in (0, 1], got {threshold}")));
    }
    if snapshots.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("snapshot matrix has non-finite entries".into()));
    }

    let reference = if options.center {
        snapshots.column_mean()
    } else {
        DVector::zeros(n_h)
    };
    let mut centered = snapshots.clone();
    for mut col in centered.column_iter_mut() {
        col -= &reference;
    }
    if centered.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("centered snapshot matrix is zero".into()));
    }

    let gram = centered.tr_mul(&centered);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    // Gram eigenvalues carry absolute rounding error of order m * eps * lambda_max,
    // so anything below that is numerically zero.
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let noise_floor = m as f64 * f64::EPSILON * lambda_max;
    let singular_values: Vec<f64> = order
        .iter()
        .map(|&j| {
            let lambda = eig.eigenvalues[j];
            if lambda > noise_floor {
                lambda.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let sigma_max = singular_values[0];
    if sigma_max == 0.0 {
        return Err(Error::Degenerate("no energetic modes".into()));
    }
    let usable = singular_values.iter().take_while(|&&s| s > RELATIVE_SV_CUTOFF * sigma_max).count();

    let mut rank = usable;
    for r in 1..=usable {
        if energy_fraction(&singular_values, r)? >= threshold {
            rank = r;
            break;
        }
    }

    let mut modes = DMatrix::zeros(n_h, rank);
    for (k, &j) in order.iter().take(rank).enumerate() {
        let v = eig.eigenvectors.column(j);
        let phi = &centered * v / singular_values[k];
        modes.set_column(k, &phi);
    }
    reorthonormalize(&mut modes);
    for mut col in modes.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }

    let energy_captured = energy_fraction(&singular_values, rank)?;
    Ok(PodBasis {
        modes,
        singular_values,
        reference,
        energy_captured,
    })
}

/// One modified Gram-Schmidt sweep, in column order. Removes the loss of
/// orthogonality that the squared condition number of the Gram matrix
/// introduces for trailing modes.
fn reorthonormalize(modes: &mut DMatrix<f64>) {
    for j in 0..modes.ncols() {
        for k in 0..j {
            let proj = modes.column(k).dot(&modes.column(j));
            let prev = modes.column(k).clone_owned();
            modes.column_mut(j).axpy(-proj, &prev, 1.0);
        }
        let norm = modes.column(j).norm();
        modes.column_mut(j).unscale_mut(norm);
    }
}

impl PodBasis {
    /// Assemble a basis from stored parts. Used when loading archives.
    pub fn from_parts(modes: DMatrix<f64>, singular_values: Vec<f64>, reference: Vec<f64>) -> Result<Self> {
        let (n_h, r) = modes.shape();
        if reference.len() != n_h {
            return Err(Error::Shape(format!(
                "reference has {} entries, modes have {n_h} rows",
                reference.len()
            )));
        }
        if r == 0 || r > singular_values.len() {
            return Err(Error::Shape(format!(
                "rank {r} invalid for {} singular values",
                singular_values.len()
            )));
        }
        if singular_values.windows(2).any(|w| w[1] > w[0]) || singular_values.iter().any(|&s| s < 0.0) {
            return Err(Error::Shape("singular values must be non-negative and descending".into()));
        }
        let energy_captured = energy_fraction(&singular_values, r)?;
        Ok(Self {
            modes,
            singular_values,
            reference: DVector::from_vec(reference),
            energy_captured,
        })
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.modes.nrows()
    }

    pub fn energy_captured(&self) -> f64 {
        self.energy_captured
    }

    pub fn project(&self, field: &[f64]) -> Result<PodCoefficients> {
        if field.len() != self.n_nodes() {
            return Err(Error::Shape(format!(
                "field has {} entries, basis has {} nodes",
                field.len(),
                self.n_nodes()
            )));
        }
        let centered = DVector::from_column_slice(field) - &self.reference;
        let values = self.modes.tr_mul(&centered);
        Ok(PodCoefficients {
            values: values.iter().copied().collect(),
        })
    }

    pub fn reconstruct(&self, coeffs: &PodCoefficients) -> Result<Vec<f64>> {
        if coeffs.len() != self.rank() {
            return Err(Error::Shape(format!(
                "{} coefficients for a rank-{} basis",
                coeffs.len(),
                self.rank()
            )));
        }
        let a = DVector::from_column_slice(&coeffs.values);
        let field = &self.reference + &self.modes * a;
        Ok(field.iter().copied().collect())
    }

    /// Write `basis.bin`: magic, version, `N_h`, `r`, `m`, then reference,
    /// column-major modes and singular values, all little-endian.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (n_h, r) = self.modes.shape();
        let m = self.singular_values.len();
        let mut buf = Vec::with_capacity(17 + 8 * (n_h + n_h * r + m));
        buf.extend_from_slice(BASIS_MAGIC);
        buf.push(BASIS_VERSION);
        for d in [n_h, r, m] {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        // nalgebra storage is column-major already
        for v in self.reference.iter().chain(self.modes.iter()).chain(&self.singular_values) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 4 || &bytes[..4] != BASIS_MAGIC {
            return Err(Error::format(path, "missing PODB magic"));
        }
        if bytes.len() < 17 {
            return Err(Error::corruption(path, "truncated header"));
        }
        if bytes[4] != BASIS_VERSION {
            return Err(Error::format(path, format!("unsupported basis version {}", bytes[4])));
        }
        let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let (n_h, r, m) = (dim(5), dim(9), dim(13));
        let expected = n_h + n_h * r + m;
        let payload = &bytes[17..];
        if payload.len() != 8 * expected {
            return Err(Error::corruption(
                path,
                format!("payload has {} bytes, expected {}", payload.len(), 8 * expected),
            ));
        }
        let floats: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if floats.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data {
                path: path.into(),
                message: "non-finite value in basis".into(),
            });
        }
        let reference = floats[..n_h].to_vec();
        let modes = DMatrix::from_column_slice(n_h, r, &floats[n_h..n_h + n_h * r]);
        let singular_values = floats[n_h + n_h * r..].to_vec();
        Self::from_parts(modes, singular_values, reference).map_err(|e| Error::corruption(path, e.to_string()))
    }
}

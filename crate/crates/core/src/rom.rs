//! The POD-GPR surrogate: one POD basis over all training snapshots and one
//! Gaussian process per retained mode, mapping dwell time to the final-step
//! POD coefficients.
//!
//! Archive layout (a directory):
//!
//! - `manifest.json`: kind, version, rank, node count, training dwell times
//! - `basis.bin`: see [`PodBasis::save`]
//! - `gprs.json`: per-mode hyperparameters and training data, every float
//!   stored as the hex of its little-endian bytes
//! - `norm.json`: affine dwell-time normalization, same float encoding

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ParameterPoint, SnapshotTensor};
use crate::error::{Error, Result};
use crate::gpr::{fit_gpr, GprConfig, GprModel, Posterior, RbfKernel};
use crate::pod::{compute_pod, PodBasis, PodCoefficients};

pub const ROM_VERSION: u32 = 1;
pub const ROM_KIND: &str = "pod-gpr";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RomConfig {
    pub energy_threshold: f64,
    pub jitter: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for RomConfig {
    fn default() -> Self {
        Self {
            energy_threshold: 0.9999,
            jitter: None,
            restarts: 8,
            seed: 0,
        }
    }
}

/// Affine map of dwell time onto `[0, 1]` over the training range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputNorm {
    pub offset: f64,
    pub scale: f64,
}

impl InputNorm {
    pub fn fit(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = if hi > lo { hi - lo } else { 1.0 };
        Self { offset: lo, scale }
    }

    pub fn apply(&self, dt: f64) -> f64 {
        (dt - self.offset) / self.scale
    }

    pub fn invert(&self, u: f64) -> f64 {
        u * self.scale + self.offset
    }
}

/// Predicted final-layer field with a per-node 95% band.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPrediction {
    pub dwell_time: f64,
    pub mean_field: Vec<f64>,
    pub lower_95: Vec<f64>,
    pub upper_95: Vec<f64>,
    pub coeff_means: Vec<f64>,
    pub coeff_variances: Vec<f64>,
    /// `true` when the dwell time lies outside the training range.
    pub extrapolated: bool,
}

#[derive(Clone, Debug)]
pub struct PodGprRom {
    basis: PodBasis,
    gprs: Vec<GprModel>,
    input_norm: InputNorm,
    training_params: Vec<ParameterPoint>,
}

/// Train the surrogate: POD over every snapshot of every training
/// parameter, then one GP per mode on the projected final-step fields.
pub fn train_pod_gpr(train: &SnapshotTensor, config: &RomConfig) -> Result<PodGprRom> {
    let n_mu = train.n_params();
    if n_mu < 2 {
        return Err(Error::Config(format!("POD-GPR needs at least 2 training parameters, got {n_mu}")));
    }
    let (n_h, n_t) = (train.n_nodes(), train.n_steps());
    let mut snapshots = DMatrix::zeros(n_h, n_mu * n_t);
    for (i, m) in train.matrices().iter().enumerate() {
        snapshots.columns_mut(i * n_t, n_t).copy_from(m.values());
    }
    let basis = compute_pod(&snapshots, config.energy_threshold)?;

    let coeffs: Vec<PodCoefficients> = train
        .matrices()
        .iter()
        .map(|m| basis.project(&m.final_field()))
        .collect::<Result<_>>()?;
    let dwell = train.dwell_times();
    let input_norm = InputNorm::fit(&dwell);
    let inputs: Vec<f64> = dwell.iter().map(|&dt| input_norm.apply(dt)).collect();
    let gpr_config = GprConfig {
        jitter: config.jitter,
        restarts: config.restarts,
        seed: config.seed,
    };

    let gprs = (0..basis.rank())
        .into_par_iter()
        .map(|j| {
            let targets: Vec<f64> = coeffs.iter().map(|a| a.values[j]).collect();
            fit_gpr(&inputs, &targets, &gpr_config).map_err(|e| e.with_mode(j))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PodGprRom {
        basis,
        gprs,
        input_norm,
        training_params: train.matrices().iter().map(|m| m.parameter()).collect(),
    })
}

pub fn predict_distortion(rom: &PodGprRom, dt: f64) -> FieldPrediction {
    rom.predict(dt)
}

impl PodGprRom {
    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn gprs(&self) -> &[GprModel] {
        &self.gprs
    }

    pub fn input_norm(&self) -> InputNorm {
        self.input_norm
    }

    pub fn training_params(&self) -> &[ParameterPoint] {
        &self.training_params
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn n_nodes(&self) -> usize {
        self.basis.n_nodes()
    }

    pub fn training_range(&self) -> (f64, f64) {
        self.training_params.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.dwell_time), b.max(p.dwell_time))
        })
    }

    /// Posterior of every POD coefficient at dwell time `dt`.
    pub fn coefficient_posteriors(&self, dt: f64) -> Vec<Posterior> {
        let u = self.input_norm.apply(dt);
        self.gprs.iter().map(|g| g.predict(u)).collect()
    }

    pub fn predict(&self, dt: f64) -> FieldPrediction {
        let post = self.coefficient_posteriors(dt);
        let coeff_means: Vec<f64> = post.iter().map(|p| p.mean).collect();
        let coeff_variances: Vec<f64> = post.iter().map(|p| p.variance).collect();
        let mean_field = self
            .basis
            .reconstruct(&PodCoefficients {
                values: coeff_means.clone(),
            })
            .expect("one GP per mode");

        let modes = self.basis.modes();
        let n_h = modes.nrows();
        let mut node_var = vec![0.0; n_h];
        for (j, &var) in coeff_variances.iter().enumerate() {
            for (v, phi) in node_var.iter_mut().zip(modes.column(j).iter()) {
                *v += phi * phi * var;
            }
        }
        let half: Vec<f64> = node_var.iter().map(|v| 1.96 * v.sqrt()).collect();
        let lower_95 = mean_field.iter().zip(&half).map(|(m, h)| m - h).collect();
        let upper_95 = mean_field.iter().zip(&half).map(|(m, h)| m + h).collect();

        let (lo, hi) = self.training_range();
        FieldPrediction {
            dwell_time: dt,
            mean_field,
            lower_95,
            upper_95,
            coeff_means,
            coeff_variances,
            extrapolated: dt < lo || dt > hi,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.basis.save(&dir.join("basis.bin"))?;

        let modes = self
            .gprs
            .iter()
            .enumerate()
            .map(|(j, g)| GprEntry {
                mode: j,
                signal_variance: hex_f64(g.kernel().signal_variance),
                length_scale: hex_f64(g.kernel().length_scale),
                jitter: hex_f64(g.jitter()),
                mean_constant: hex_f64(g.mean_constant()),
                train_inputs: g.train_inputs().iter().map(|&v| hex_f64(v)).collect(),
                train_targets: g.train_targets().iter().map(|&v| hex_f64(v)).collect(),
            })
            .collect();
        write_json(
            &dir.join("gprs.json"),
            &GprFile {
                version: ROM_VERSION,
                modes,
            },
        )?;
        write_json(
            &dir.join("norm.json"),
            &NormFile {
                version: ROM_VERSION,
                offset: hex_f64(self.input_norm.offset),
                scale: hex_f64(self.input_norm.scale),
            },
        )?;
        write_json(
            &dir.join("manifest.json"),
            &Manifest {
                kind: ROM_KIND.into(),
                version: ROM_VERSION,
                rank: self.rank(),
                n_h: self.n_nodes(),
                training_dwell_times: self.training_params.iter().map(|p| p.dwell_time).collect(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = read_json(&manifest_path)?;
        if manifest.kind != ROM_KIND {
            return Err(Error::format(
                &manifest_path,
                format!("archive kind '{}' is not {ROM_KIND}", manifest.kind),
            ));
        }
        if manifest.version != ROM_VERSION {
            return Err(Error::format(&manifest_path, format!("unsupported version {}", manifest.version)));
        }
        let basis = PodBasis::load(&dir.join("basis.bin"))?;
        if basis.rank() != manifest.rank || basis.n_nodes() != manifest.n_h {
            return Err(Error::corruption(
                dir.join("basis.bin"),
                format!(
                    "basis is {}x{}, manifest declares {}x{}",
                    basis.n_nodes(),
                    basis.rank(),
                    manifest.n_h,
                    manifest.rank
                ),
            ));
        }

        let norm_path = dir.join("norm.json");
        let norm: NormFile = read_json(&norm_path)?;
        check_version(&norm_path, norm.version)?;
        let input_norm = InputNorm {
            offset: unhex_f64(&norm_path, &norm.offset)?,
            scale: unhex_f64(&norm_path, &norm.scale)?,
        };

        let gpr_path = dir.join("gprs.json");
        let file: GprFile = read_json(&gpr_path)?;
        check_version(&gpr_path, file.version)?;
        let mut gprs = Vec::with_capacity(manifest.rank);
        for j in 0..manifest.rank {
            let entry = file
                .modes
                .iter()
                .find(|e| e.mode == j)
                .ok_or_else(|| Error::format(&gpr_path, format!("missing GPR entry for mode {j}")))?;
            gprs.push(entry.to_model(&gpr_path)?);
        }
        if file.modes.len() != manifest.rank {
            return Err(Error::format(
                &gpr_path,
                format!("{} GPR entries for rank {}", file.modes.len(), manifest.rank),
            ));
        }

        let training_params = manifest
            .training_dwell_times
            .iter()
            .map(|&dt| ParameterPoint::new(dt))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::corruption(&manifest_path, e.to_string()))?;
        Ok(Self {
            basis,
            gprs,
            input_norm,
            training_params,
        })
    }
}

pub fn save_rom(rom: &PodGprRom, dir: &Path) -> Result<()> {
    rom.save(dir)
}

pub fn load_rom(dir: &Path) -> Result<PodGprRom> {
    PodGprRom::load(dir)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    kind: String,
    version: u32,
    rank: usize,
    n_h: usize,
    training_dwell_times: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormFile {
    version: u32,
    offset: String,
    scale: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GprFile {
    version: u32,
    modes: Vec<GprEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GprEntry {
    mode: usize,
    signal_variance: String,
    length_scale: String,
    jitter: String,
    mean_constant: String,
    train_inputs: Vec<String>,
    train_targets: Vec<String>,
}

impl GprEntry {
    fn to_model(&self, path: &Path) -> Result<GprModel> {
        let decode = |v: &[String]| v.iter().map(|s| unhex_f64(path, s)).collect::<Result<Vec<_>>>();
        let inputs = decode(&self.train_inputs)?;
        let targets = decode(&self.train_targets)?;
        let kernel = RbfKernel::new(unhex_f64(path, &self.signal_variance)?, unhex_f64(path, &self.length_scale)?)
            .map_err(|e| Error::corruption(path, format!("mode {}: {e}", self.mode)))?;
        let jitter = unhex_f64(path, &self.jitter)?;
        let model = GprModel::with_hyperparameters(&inputs, &targets, kernel, jitter)
            .map_err(|e| Error::corruption(path, format!("mode {}: {e}", self.mode)))?;
        if model.mean_constant() != unhex_f64(path, &self.mean_constant)? {
            return Err(Error::corruption(
                path,
                format!("mode {}: mean constant disagrees with targets", self.mode),
            ));
        }
        Ok(model)
    }
}

fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != ROM_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    Ok(())
}

pub(crate) fn hex_f64(v: f64) -> String {
    hex::encode(v.to_le_bytes())
}

pub(crate) fn unhex_f64(path: &Path, s: &str) -> Result<f64> {
    let bytes = hex::decode(s).map_err(|e| Error::format(path, format!("bad hex float '{s}': {e}")))?;
    let arr: [u8; 8] = bytes
        .try_into()
        .map_err(|_| Error::format(path, format!("hex float '{s}' is not 8 bytes")))?;
    Ok(f64::from_le_bytes(arr))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value).expect("archive types serialize");
    json.push(b'\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&raw).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, split_dataset, SyntheticConfig};

    fn small_rom() -> (PodGprRom, SnapshotTensor) {
        let data = generate_synthetic_dataset(&SyntheticConfig {
            n_radial: 3,
            n_theta: 8,
            n_layers: 6,
            dwell_times: vec![20.0, 35.0, 50.0, 65.0, 80.0],
            noise_sigma: 0.0,
            seed: 0,
        })
        .unwrap();
        let rom = train_pod_gpr(&data, &RomConfig::default()).unwrap();
        (rom, data)
    }

    #[test]
    fn hex_round_trip() {
        for v in [0.0, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300] {
            assert_eq!(unhex_f64(Path::new("x"), &hex_f64(v)).unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(hex_f64(1.0), "000000000000f03f");
        assert!(unhex_f64(Path::new("x"), "zz").is_err());
        assert!(unhex_f64(Path::new("x"), "00").is_err());
    }

    #[test]
    fn rank_bounds_and_band_ordering() {
        let (rom, data) = small_rom();
        assert!(rom.rank() >= 1 && rom.rank() <= data.n_params() * data.n_steps());
        assert_eq!(rom.gprs().len(), rom.rank());
        for dt in [10.0, 27.0, 50.0, 100.0] {
            let p = rom.predict(dt);
            assert!(p.coeff_variances.iter().all(|&v| v >= 0.0));
            for i in 0..p.mean_field.len() {
                assert!(p.lower_95[i] <= p.mean_field[i] && p.mean_field[i] <= p.upper_95[i]);
            }
        }
        assert!(rom.predict(100.0).extrapolated);
        assert!(!rom.predict(45.0).extrapolated);
    }

    #[test]
    fn needs_two_parameters() {
        let (_, data) = small_rom();
        let (one, _) = split_dataset(&data, &[20.0], &[]).unwrap();
        assert!(matches!(train_pod_gpr(&one, &RomConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn archive_errors() {
        let (rom, _) = small_rom();
        let dir = tempfile::tempdir().unwrap();
        rom.save(dir.path()).unwrap();

        let gp_path = dir.path().join("gprs.json");
        let mut file: serde_json::Value = serde_json::from_slice(&fs::read(&gp_path).unwrap()).unwrap();
        let removed = file["modes"].as_array_mut().unwrap().remove(0);
        assert_eq!(removed["mode"], 0);
        fs::write(&gp_path, serde_json::to_vec(&file).unwrap()).unwrap();
        let err = PodGprRom::load(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("mode 0"), "{err}");

        rom.save(dir.path()).unwrap();
        let manifest = dir.path().join("manifest.json");
        let text = fs::read_to_string(&manifest).unwrap().replace("\"version\": 1", "\"version\": 2");
        fs::write(&manifest, text).unwrap();
        assert!(matches!(PodGprRom::load(dir.path()), Err(Error::Format { .. })));
    }
}

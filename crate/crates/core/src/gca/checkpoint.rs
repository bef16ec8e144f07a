//! `gca.json` manifest plus `gca_weights.bin`, little-endian f64 tensors in
//! manifest order, each stored row-major.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::model::{predict_gca, GcaArchitecture, GcaModel, GcaNormalization, GcaParams};
use super::train::GcaTrainConfig;
use crate::error::{Error, Result};
use crate::rom::{read_json, write_json};

pub const MANIFEST_FILE: &str = "gca.json";
pub const WEIGHTS_FILE: &str = "gca_weights.bin";
const KIND: &str = "gca";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    kind: String,
    version: u32,
    n_nodes: usize,
    seed: u64,
    architecture: GcaArchitecture,
    normalization: GcaNormalization,
    config: GcaTrainConfig,
    training_dwell_times: Vec<f64>,
    edges: Vec<(usize, usize)>,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to run a trained GCA again.
#[derive(Clone, Debug, PartialEq)]
pub struct GcaCheckpoint {
    pub model: GcaModel,
    pub graph: Graph,
    pub config: GcaTrainConfig,
    pub training_dwell_times: Vec<f64>,
}

impl GcaCheckpoint {
    pub fn training_range(&self) -> (f64, f64) {
        self.training_dwell_times
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)))
    }

    pub fn predict(&self, dt: f64) -> Result<Vec<f64>> {
        predict_gca(&self.model, &self.graph, dt)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let named = self.model.params.named_tensors();
        let manifest = Manifest {
            kind: KIND.into(),
            version: VERSION,
            n_nodes: self.model.n_nodes,
            seed: self.config.seed,
            architecture: self.model.architecture.clone(),
            normalization: self.model.normalization,
            config: self.config.clone(),
            training_dwell_times: self.training_dwell_times.clone(),
            edges: self.graph.edges(),
            tensors: named
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: [t.nrows(), t.ncols()],
                })
                .collect(),
        };
        let mut bytes = Vec::with_capacity(8 * self.model.params.n_params());
        for (_, t) in &named {
            for r in 0..t.nrows() {
                for c in 0..t.ncols() {
                    bytes.extend_from_slice(&t[(r, c)].to_le_bytes());
                }
            }
        }
        let wpath = dir.join(WEIGHTS_FILE);
        fs::write(&wpath, bytes).map_err(|e| Error::io(&wpath, e))?;
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let manifest: Manifest = read_json(&mpath)?;
        if manifest.kind != KIND {
            return Err(Error::format(
                &mpath,
                format!("expected kind \"{KIND}\", found \"{}\"", manifest.kind),
            ));
        }
        if manifest.version != VERSION {
            return Err(Error::format(&mpath, format!("unsupported version {}", manifest.version)));
        }
        let graph = Graph::from_edges(manifest.n_nodes, &manifest.edges).map_err(|e| Error::format(&mpath, e.to_string()))?;
        let mut model = GcaModel::zeros(manifest.architecture, manifest.n_nodes).map_err(|e| Error::format(&mpath, e.to_string()))?;
        model.normalization = manifest.normalization;

        let expected: Vec<(String, (usize, usize))> = model.params.named_tensors().into_iter().map(|(n, t)| (n, t.shape())).collect();
        let listed: Vec<(String, (usize, usize))> = manifest
            .tensors
            .iter()
            .map(|t| (t.name.clone(), (t.shape[0], t.shape[1])))
            .collect();
        if expected != listed {
            return Err(Error::format(&mpath, "tensor list does not match the architecture"));
        }

        let wpath = dir.join(WEIGHTS_FILE);
        let raw = fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;
        let total: usize = expected.iter().map(|(_, (r, c))| r * c).sum();
        if raw.len() != 8 * total {
            return Err(Error::corruption(
                &wpath,
                format!("expected {} bytes, found {}", 8 * total, raw.len()),
            ));
        }
        let mut values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
        for t in model.params.tensors_mut() {
            let (rows, cols) = t.shape();
            *t = DMatrix::from_row_iterator(rows, cols, values.by_ref().take(rows * cols));
        }
        if !model.params.is_finite() {
            return Err(Error::Data {
                path: wpath,
                message: "non-finite weight".into(),
            });
        }
        Ok(Self {
            model,
            graph,
            config: manifest.config,
            training_dwell_times: manifest.training_dwell_times,
        })
    }
}

/// Parameter count for an architecture on `n_nodes` nodes.
pub fn parameter_count(architecture: &GcaArchitecture, n_nodes: usize) -> usize {
    GcaParams::zeros(architecture, n_nodes).n_params()
}

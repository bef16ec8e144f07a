//! Snapshot data: mesh geometry, per-parameter snapshot matrices, the
//! parameter-indexed tensor, on-disk storage and a synthetic generator.

mod snpt;
mod synthetic;

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use snpt::{load_snapshot_tensor, read_snpt, save_snapshot_tensor, write_snpt, SNPT_MAGIC, SNPT_VERSION};
pub use synthetic::{
    amplitude, generate_synthetic_dataset, oracle_distortion, step_factor, SyntheticConfig, CYLINDER_RADIUS, LAYER_THICKNESS,
};

/// Dwell-time range covered by the reference simulation campaign, in seconds.
pub const MODELED_DWELL_RANGE: (f64, f64) = (20.0, 80.0);

/// A point in process-parameter space. Only dwell time is modeled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub dwell_time: f64,
}

impl ParameterPoint {
    pub fn new(dwell_time: f64) -> Result<Self> {
        if !dwell_time.is_finite() || dwell_time <= 0.0 {
            return Err(Error::Config(format!("dwell time must be positive and finite, got {dwell_time}")));
        }
        Ok(Self { dwell_time })
    }

    pub fn in_modeled_range(&self) -> bool {
        (MODELED_DWELL_RANGE.0..=MODELED_DWELL_RANGE.1).contains(&self.dwell_time)
    }
}

/// Node positions (mm), deposition layer per node, and undirected mesh edges.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshGeometry {
    node_coords: Vec<[f64; 3]>,
    layer_index: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl MeshGeometry {
    /// Validates edge indices, self loops and duplicates. Edges are stored
    /// with the smaller index first.
    pub fn new(node_coords: Vec<[f64; 3]>, layer_index: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = node_coords.len();
        if layer_index.len() != n {
            return Err(Error::Shape(format!("layer_index has {} entries for {n} nodes", layer_index.len())));
        }
        if node_coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config("node coordinates must be finite".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::Config(format!("edge ({a}, {b}) references a node outside 0..{n}")));
            }
            if a == b {
                return Err(Error::Config(format!("self-loop edge at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Config(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            normalized.push(e);
        }
        Ok(Self {
            node_coords,
            layer_index,
            edges: normalized,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn node_coords(&self) -> &[[f64; 3]] {
        &self.node_coords
    }

    pub fn layer_index(&self) -> &[usize] {
        &self.layer_index
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

/// Nodal distortion (mm) for one parameter: column `n` is the field after
/// deposition step `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix {
    values: DMatrix<f64>,
    parameter: ParameterPoint,
}

impl SnapshotMatrix {
    pub fn new(values: DMatrix<f64>, parameter: ParameterPoint) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "snapshot for dt = {} contains non-finite entries",
                parameter.dwell_time
            )));
        }
        Ok(Self { values, parameter })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn parameter(&self) -> ParameterPoint {
        self.parameter
    }

    pub fn dwell_time(&self) -> f64 {
        self.parameter.dwell_time
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.ncols()
    }

    /// Distortion after the last deposition step.
    pub fn final_field(&self) -> Vec<f64> {
        self.values.column(self.values.ncols() - 1).iter().copied().collect()
    }
}

/// Parameter-indexed collection of snapshot matrices on a shared mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotTensor {
    matrices: Vec<SnapshotMatrix>,
    mesh: Arc<MeshGeometry>,
    n_steps: usize,
}

impl SnapshotTensor {
    pub fn new(mesh: Arc<MeshGeometry>, n_steps: usize, matrices: Vec<SnapshotMatrix>) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("tensor needs at least one time step".into()));
        }
        if let Some(&bad) = mesh.layer_index().iter().find(|&&l| l >= n_steps) {
            return Err(Error::Config(format!("layer index {bad} outside 0..{n_steps}")));
        }
        let mut seen = Vec::with_capacity(matrices.len());
        for m in &matrices {
            if m.n_nodes() != mesh.n_nodes() || m.n_steps() != n_steps {
                return Err(Error::Shape(format!(
                    "snapshot for dt = {} is {}x{}, expected {}x{}",
                    m.dwell_time(),
                    m.n_nodes(),
                    m.n_steps(),
                    mesh.n_nodes(),
                    n_steps
                )));
            }
            if seen.contains(&m.dwell_time()) {
                return Err(Error::DuplicateParameter(m.dwell_time()));
            }
            seen.push(m.dwell_time());
        }
        Ok(Self { matrices, mesh, n_steps })
    }

    pub fn matrices(&self) -> &[SnapshotMatrix] {
        &self.matrices
    }

    pub fn mesh(&self) -> &Arc<MeshGeometry> {
        &self.mesh
    }

    pub fn n_params(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dwell_times(&self) -> Vec<f64> {
        self.matrices.iter().map(SnapshotMatrix::dwell_time).collect()
    }

    pub fn get(&self, dwell_time: f64) -> Option<&SnapshotMatrix> {
        self.matrices.iter().find(|m| m.dwell_time() == dwell_time)
    }
}

/// Partition a tensor by exact dwell-time match. Output order follows the
/// requested lists.
pub fn split_dataset(tensor: &SnapshotTensor, train: &[f64], test: &[f64]) -> Result<(SnapshotTensor, SnapshotTensor)> {
    if let Some(dt) = train.iter().find(|dt| test.contains(dt)) {
        return Err(Error::Split(format!("dwell time {dt} appears in both lists")));
    }
    let pick = |list: &[f64]| -> Result<SnapshotTensor> {
        let mut out = Vec::with_capacity(list.len());
        for (i, &dt) in list.iter().enumerate() {
            if list[..i].contains(&dt) {
                return Err(Error::Split(format!("dwell time {dt} requested twice")));
            }
            out.push(tensor.get(dt).ok_or(Error::Lookup(dt))?.clone());
        }
        SnapshotTensor::new(Arc::clone(&tensor.mesh), tensor.n_steps, out)
    };
    Ok((pick(train)?, pick(test)?))
}

/// Parse a dwell-time list: either `start:stop:step` (stop included when it
/// falls on the grid) or comma-separated values.
pub fn parse_dwell_list(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("cannot parse '{s}' as a number")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("range '{spec}' must be start:stop:step")));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step <= 0.0 || stop < start {
            return Err(Error::Config(format!("empty or invalid range '{spec}'")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|k| start + step * k as f64).collect());
    }
    spec.split(',').map(num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_tensor(dts: &[f64]) -> SnapshotTensor {
        let mesh = Arc::new(MeshGeometry::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], vec![0, 1], vec![(0, 1)]).unwrap());
        let mats = dts
            .iter()
            .map(|&dt| SnapshotMatrix::new(DMatrix::from_element(2, 2, dt), ParameterPoint::new(dt).unwrap()).unwrap())
            .collect();
        SnapshotTensor::new(mesh, 2, mats).unwrap()
    }

    #[test]
    fn mesh_rejects_bad_edges() {
        let coords = vec![[0.0; 3]; 3];
        assert!(MeshGeometry::new(coords.clone(), vec![0; 3], vec![(0, 3)]).is_err());
        assert!(MeshGeometry::new(coords.clone(), vec![0; 3], vec![(1, 1)]).is_err());
        assert!(MeshGeometry::new(coords.clone(), vec![0; 3], vec![(0, 1), (1, 0)]).is_err());
        assert!(MeshGeometry::new(coords, vec![0; 3], vec![(0, 1), (1, 2)]).is_ok());
    }

    #[test]
    fn tensor_rejects_duplicate_parameters() {
        let mesh = Arc::new(MeshGeometry::new(vec![[0.0; 3]], vec![0], vec![]).unwrap());
        let m = SnapshotMatrix::new(DMatrix::zeros(1, 1), ParameterPoint::new(20.0).unwrap()).unwrap();
        let err = SnapshotTensor::new(mesh, 1, vec![m.clone(), m]).unwrap_err();
        assert!(matches!(err, Error::DuplicateParameter(_)));
    }

    #[test]
    fn tensor_rejects_layer_outside_steps() {
        let mesh = Arc::new(MeshGeometry::new(vec![[0.0; 3]], vec![3], vec![]).unwrap());
        assert!(SnapshotTensor::new(mesh, 2, vec![]).is_err());
    }

    #[test]
    fn parameter_must_be_positive() {
        assert!(ParameterPoint::new(0.0).is_err());
        assert!(ParameterPoint::new(f64::NAN).is_err());
        assert!(ParameterPoint::new(100.0).is_ok());
        assert!(!ParameterPoint::new(100.0).unwrap().in_modeled_range());
    }

    #[test]
    fn split_nine_train_four_test() {
        let all: Vec<f64> = (0..13).map(|k| 20.0 + 5.0 * k as f64).collect();
        let t = tiny_tensor(&all);
        let train = [20.0, 25.0, 35.0, 40.0, 50.0, 55.0, 65.0, 70.0, 80.0];
        let test = [30.0, 45.0, 60.0, 75.0];
        let (a, b) = split_dataset(&t, &train, &test).unwrap();
        assert_eq!(a.n_params(), 9);
        assert_eq!(b.n_params(), 4);
        assert!(Arc::ptr_eq(a.mesh(), b.mesh()));
        for m in a.matrices().iter().chain(b.matrices()) {
            assert_eq!(m, t.get(m.dwell_time()).unwrap());
        }
    }

    #[test]
    fn split_edge_cases() {
        let all: Vec<f64> = (0..13).map(|k| 20.0 + 5.0 * k as f64).collect();
        let t = tiny_tensor(&all);
        let (a, b) = split_dataset(&t, &all, &[]).unwrap();
        assert_eq!(a.n_params(), 13);
        assert_eq!(b.n_params(), 0);
        assert!(matches!(split_dataset(&t, &[33.0], &[]), Err(Error::Lookup(_))));
        assert!(matches!(split_dataset(&t, &[20.0], &[20.0]), Err(Error::Split(_))));
    }

    #[test]
    fn dwell_list_syntax() {
        let grid = parse_dwell_list("20:80:5").unwrap();
        assert_eq!(grid.len(), 13);
        assert_eq!(grid[12], 80.0);
        assert_eq!(parse_dwell_list("20").unwrap(), vec![20.0]);
        assert_eq!(parse_dwell_list("30,45, 60").unwrap(), vec![30.0, 45.0, 60.0]);
        assert_eq!(parse_dwell_list("20:82:5").unwrap().last(), Some(&80.0));
        assert!(parse_dwell_list("").unwrap().is_empty());
        assert!(parse_dwell_list("20:10:5").is_err());
        assert!(parse_dwell_list("a,b").is_err());
    }
}

//! Directory storage for snapshot tensors.
//!
//! `meta.json` holds dimensions, dwell times and the mesh. Each parameter gets
//! a `snap_<i>.bin`:
//!
//! ```text
//! "SNPT" | u8 version = 1 | u32 N_h | u32 N_t | N_h * N_t f64, node-major
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MeshGeometry, ParameterPoint, SnapshotMatrix, SnapshotTensor};
use crate::error::{Error, Result};

pub const SNPT_MAGIC: &[u8; 4] = b"SNPT";
pub const SNPT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;
const META_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    version: u32,
    n_mu: usize,
    n_h: usize,
    n_t: usize,
    dwell_times: Vec<f64>,
    node_coords: Vec<[f64; 3]>,
    layer_index: Vec<usize>,
    edges: Vec<[usize; 2]>,
}

fn snap_name(i: usize) -> String {
    format!("snap_{i}.bin")
}

/// Write a matrix as an SNPT file.
pub fn write_snpt(path: &Path, values: &DMatrix<f64>) -> Result<()> {
    let (n_h, n_t) = values.shape();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * n_h * n_t);
    buf.extend_from_slice(SNPT_MAGIC);
    buf.push(SNPT_VERSION);
    buf.extend_from_slice(&(n_h as u32).to_le_bytes());
    buf.extend_from_slice(&(n_t as u32).to_le_bytes());
    for i in 0..n_h {
        for n in 0..n_t {
            buf.extend_from_slice(&values[(i, n)].to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Read an SNPT file. Checks magic, version, payload length and finiteness.
pub fn read_snpt(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != SNPT_MAGIC {
        return Err(Error::format(path, "missing SNPT magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::corruption(path, "truncated header"));
    }
    if bytes[4] != SNPT_VERSION {
        return Err(Error::format(path, format!("unsupported SNPT version {}", bytes[4])));
    }
    let n_h = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let n_t = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 8 * n_h * n_t {
        return Err(Error::corruption(
            path,
            format!("payload has {} bytes, header declares {n_h}x{n_t} values", payload.len()),
        ));
    }
    let mut values = DMatrix::zeros(n_h, n_t);
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data {
                path: path.into(),
                message: format!("non-finite value at node {}, step {}", k / n_t, k % n_t),
            });
        }
        values[(k / n_t, k % n_t)] = v;
    }
    Ok(values)
}

pub fn save_snapshot_tensor(tensor: &SnapshotTensor, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mesh = tensor.mesh();
    let meta = Meta {
        version: META_VERSION,
        n_mu: tensor.n_params(),
        n_h: tensor.n_nodes(),
        n_t: tensor.n_steps(),
        dwell_times: tensor.dwell_times(),
        node_coords: mesh.node_coords().to_vec(),
        layer_index: mesh.layer_index().to_vec(),
        edges: mesh.edges().iter().map(|&(a, b)| [a, b]).collect(),
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_vec(&meta).expect("meta serializes");
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    for (i, m) in tensor.matrices().iter().enumerate() {
        write_snpt(&dir.join(snap_name(i)), m.values())?;
    }
    Ok(())
}

pub fn load_snapshot_tensor(dir: &Path) -> Result<SnapshotTensor> {
    let meta_path = dir.join("meta.json");
    let raw = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_slice(&raw).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if meta.version != META_VERSION {
        return Err(Error::format(&meta_path, format!("unsupported version {}", meta.version)));
    }
    if meta.dwell_times.len() != meta.n_mu || meta.node_coords.len() != meta.n_h || meta.layer_index.len() != meta.n_h {
        return Err(Error::corruption(&meta_path, "array lengths disagree with declared dimensions"));
    }
    let edges = meta.edges.iter().map(|e| (e[0], e[1])).collect();
    let mesh = MeshGeometry::new(meta.node_coords, meta.layer_index, edges).map_err(|e| Error::corruption(&meta_path, e.to_string()))?;

    let mut matrices = Vec::with_capacity(meta.n_mu);
    for (i, &dt) in meta.dwell_times.iter().enumerate() {
        let path = dir.join(snap_name(i));
        let values = read_snpt(&path)?;
        if values.shape() != (meta.n_h, meta.n_t) {
            return Err(Error::corruption(
                &path,
                format!(
                    "binary is {}x{}, meta.json declares {}x{}",
                    values.nrows(),
                    values.ncols(),
                    meta.n_h,
                    meta.n_t
                ),
            ));
        }
        let param = ParameterPoint::new(dt).map_err(|e| Error::corruption(&meta_path, e.to_string()))?;
        matrices.push(SnapshotMatrix::new(values, param)?);
    }
    SnapshotTensor::new(Arc::new(mesh), meta.n_t, matrices).map_err(|e| Error::corruption(&meta_path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros_tensor() -> SnapshotTensor {
        let mesh = Arc::new(MeshGeometry::new(vec![[0.0; 3]], vec![0], vec![]).unwrap());
        let m = SnapshotMatrix::new(DMatrix::zeros(1, 2), ParameterPoint::new(20.0).unwrap()).unwrap();
        SnapshotTensor::new(mesh, 2, vec![m]).unwrap()
    }

    #[test]
    fn zero_payload_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Arc::new(MeshGeometry::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![0, 0], vec![(0, 1)]).unwrap());
        let m = SnapshotMatrix::new(DMatrix::zeros(2, 2), ParameterPoint::new(20.0).unwrap()).unwrap();
        let t = SnapshotTensor::new(mesh, 2, vec![m]).unwrap();
        save_snapshot_tensor(&t, dir.path()).unwrap();
        let bytes = fs::read(dir.path().join("snap_0.bin")).unwrap();
        assert_eq!(bytes.len(), 4 + 1 + 4 + 4 + 32);
        assert_eq!(&bytes[..4], &[0x53, 0x4E, 0x50, 0x54]);
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert!(bytes[13..].iter().all(|&b| b == 0));
    }

    #[test]
    fn row_major_node_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        write_snpt(&path, &m).unwrap();
        let bytes = fs::read(&path).unwrap();
        let second = f64::from_le_bytes(bytes[HEADER_LEN + 8..HEADER_LEN + 16].try_into().unwrap());
        assert_eq!(second, 2.0);
        assert_eq!(read_snpt(&path).unwrap(), m);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_snapshot_tensor(&zeros_tensor(), dir.path()).unwrap();
        let p = dir.path().join("snap_0.bin");
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'X';
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_snapshot_tensor(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_file_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        save_snapshot_tensor(&zeros_tensor(), dir.path()).unwrap();
        let p = dir.path().join("snap_0.bin");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_snapshot_tensor(dir.path()), Err(Error::Corruption { .. })));
        fs::write(&p, &bytes[..7]).unwrap();
        assert!(matches!(load_snapshot_tensor(dir.path()), Err(Error::Corruption { .. })));
    }

    #[test]
    fn nan_payload_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        save_snapshot_tensor(&zeros_tensor(), dir.path()).unwrap();
        let p = dir.path().join("snap_0.bin");
        let mut bytes = fs::read(&p).unwrap();
        bytes[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_snapshot_tensor(dir.path()), Err(Error::Data { .. })));
    }

    #[test]
    fn missing_directory_is_io_error() {
        let err = load_snapshot_tensor(Path::new("/nonexistent/romforge")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}

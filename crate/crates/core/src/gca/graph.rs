use nalgebra::DMatrix;

use crate::data::MeshGeometry;
use crate::error::{Error, Result};

/// Symmetrically normalized adjacency with self loops,
/// `D^{-1/2} (A + I) D^{-1/2}`, stored in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Build from undirected edges. Isolated nodes keep their self loop.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors: Vec<Vec<usize>> = (0..n_nodes).map(|i| vec![i]).collect();
        for &(a, b) in edges {
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::Config(format!("edge ({a}, {b}) outside 0..{n_nodes}")));
            }
            if a == b {
                return Err(Error::Config(format!("self-loop edge at node {a}")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        let mut degrees = Vec::with_capacity(n_nodes);
        for row in &mut neighbors {
            row.sort_unstable();
            let before = row.len();
            row.dedup();
            if row.len() != before {
                return Err(Error::Config("duplicate edge".into()));
            }
            degrees.push(row.len());
        }
        let mut row_ptr = Vec::with_capacity(n_nodes + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, row) in neighbors.iter().enumerate() {
            for &j in row {
                col_idx.push(j);
                values.push(1.0 / ((degrees[i] * degrees[j]) as f64).sqrt());
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_nodes,
            row_ptr,
            col_idx,
            values,
            degrees,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Degree of each node in `A + I`.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Undirected edges without self loops, smaller index first.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_nodes {
            for &j in &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]] {
                if j > i {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for i in 0..self.n_nodes {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }

    /// `A_hat * x` for an `n x d` feature matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n_nodes, "feature rows must match node count");
        let mut out = DMatrix::zeros(self.n_nodes, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let xc = xc.as_slice();
            let mut oc = out.column_mut(c);
            for i in 0..self.n_nodes {
                let mut acc = 0.0;
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[k] * xc[self.col_idx[k]];
                }
                oc[i] = acc;
            }
        }
        out
    }
}

pub fn build_graph(mesh: &MeshGeometry) -> Graph {
    Graph::from_edges(mesh.n_nodes(), mesh.edges()).expect("mesh edges are validated on construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node() {
        let g = Graph::from_edges(1, &[]).unwrap();
        assert_eq!(g.to_dense(), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn two_nodes_one_edge() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(g.to_dense(), DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn isolated_node_keeps_self_loop() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(g.to_dense()[(2, 2)], 1.0);
        assert_eq!(g.edges(), vec![(0, 1)]);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(2, &[(0, 2)]).is_err());
        assert!(Graph::from_edges(2, &[(1, 1)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn apply_matches_dense_product() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (4, 1)];
        let g = Graph::from_edges(5, &edges).unwrap();
        let x = DMatrix::from_fn(5, 3, |i, j| (i as f64 + 1.0) * 0.3 - j as f64);
        let diff = g.apply(&x) - g.to_dense() * &x;
        assert!(diff.amax() < 1e-14);
    }
}

//! Weighted directed networks without self-loops, plus random generators
//! and file formats for topologies.

mod generate;
mod io;

pub use generate::{
    generate, generate_ba, generate_powerlaw_sf, generate_ws, reweight_uniform, GeneratorKind, GeneratorSpec,
};
pub use io::{read_network, read_network_from, write_network, NetworkFormat};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An N-node weighted network. `weights[(i, j)]` is the strength of the
/// connection from i to j; the adjacency mirrors the weights' support and
/// the diagonal of both is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    weights: DMatrix<f64>,
    adjacency: DMatrix<u8>,
}

impl WeightedNetwork {
    /// A network with no edges.
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n_nodes, n_nodes),
            adjacency: DMatrix::zeros(n_nodes, n_nodes),
        }
    }

    /// Builds a network from a square weight matrix. Diagonal entries are
    /// dropped; the adjacency is derived from the nonzero pattern.
    pub fn from_weights(mut weights: DMatrix<f64>) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::Parameter(format!(
                "weight matrix must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("weight matrix has non-finite entries".into()));
        }
        weights.fill_diagonal(0.0);
        let adjacency = weights.map(|w| u8::from(w != 0.0));
        Ok(Self { weights, adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn adjacency(&self) -> &DMatrix<u8> {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[(i, j)] == 1
    }

    /// Sets w_ij, keeping the adjacency in sync. Writes to the diagonal are
    /// rejected.
    pub fn set_weight(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        if i == j {
            return Err(Error::Parameter(format!("self-loop at node {i}")));
        }
        if !w.is_finite() {
            return Err(Error::Parameter(format!("non-finite weight on ({i}, {j})")));
        }
        self.weights[(i, j)] = w;
        self.adjacency[(i, j)] = u8::from(w != 0.0);
        Ok(())
    }

    /// Number of nonzero ordered pairs.
    pub fn directed_edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a == 1).count()
    }

    /// Number of unordered pairs {i, j} with an edge in either direction.
    pub fn undirected_edge_count(&self) -> usize {
        let n = self.n_nodes();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.has_edge(i, j) || self.has_edge(j, i) {
                    count += 1;
                }
            }
        }
        count
    }

    pub fn is_symmetric(&self) -> bool {
        self.weights == self.weights.transpose()
    }

    /// Row-wise number of neighbours (the degree for symmetric networks).
    pub fn out_degrees(&self) -> Vec<usize> {
        self.adjacency
            .row_iter()
            .map(|row| row.iter().filter(|&&a| a == 1).count())
            .collect()
    }

    /// Edges (i, j, w) in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.has_edge(i, j) {
                    out.push((i, j, self.weights[(i, j)]));
                }
            }
        }
        out
    }

    /// Rescales each column so the incoming weights of every node with at
    /// least one in-neighbour sum to one. Returns the nodes without
    /// in-neighbours, which are left untouched.
    pub fn normalize_incoming(&mut self) -> Vec<usize> {
        let n = self.n_nodes();
        let mut isolated = Vec::new();
        for j in 0..n {
            let total: f64 = self.weights.column(j).sum();
            if self.adjacency.column(j).iter().all(|&a| a == 0) || total == 0.0 {
                isolated.push(j);
                continue;
            }
            self.weights.column_mut(j).scale_mut(1.0 / total);
        }
        isolated
    }

    /// Returns a copy with nodes relabeled so that new node `perm[i]` is old
    /// node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_nodes();
        let mut weights = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                weights[(perm[i], perm[j])] = self.weights[(i, j)];
            }
        }
        Self::from_weights(weights).expect("permutation preserves validity")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_weights_drops_diagonal_and_tracks_support() {
        let w = DMatrix::from_row_slice(3, 3, &[5.0, 1.5, 0.0, 0.0, 1.0, 0.5, 2.0, 0.0, 0.0]);
        let net = WeightedNetwork::from_weights(w).unwrap();
        assert_eq!(net.weight(0, 0), 0.0);
        assert_eq!(net.weight(1, 1), 0.0);
        assert_eq!(net.directed_edge_count(), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(net.has_edge(i, j), net.weight(i, j) != 0.0);
            }
        }
    }

    #[test]
    fn rejects_non_square_and_nan() {
        assert!(WeightedNetwork::from_weights(DMatrix::zeros(2, 3)).is_err());
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = f64::NAN;
        assert!(WeightedNetwork::from_weights(w).is_err());
    }

    #[test]
    fn set_weight_keeps_adjacency_in_sync() {
        let mut net = WeightedNetwork::empty(3);
        net.set_weight(0, 2, 4.0).unwrap();
        assert!(net.has_edge(0, 2));
        net.set_weight(0, 2, 0.0).unwrap();
        assert!(!net.has_edge(0, 2));
        assert!(net.set_weight(1, 1, 1.0).is_err());
    }

    #[test]
    fn normalize_incoming_columns() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 3.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let mut net = WeightedNetwork::from_weights(w).unwrap();
        let isolated = net.normalize_incoming();
        assert_eq!(isolated, vec![2]);
        assert!((net.weights().column(0).sum() - 1.0).abs() < 1e-15);
        assert!((net.weights().column(1).sum() - 1.0).abs() < 1e-15);
        assert_eq!(net.weight(1, 0), 0.75);
    }
}

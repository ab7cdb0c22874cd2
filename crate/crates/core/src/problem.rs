//! Per-node regression problems and reassembly of per-node solutions into
//! a network estimate.
//!
//! ECT and linear-mixing problems recover row i of the weight matrix (the
//! influence of every other node on node i); communication problems recover
//! column i (the incoming weights of node i).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsKind, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::network::WeightedNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    RowWise,
    ColumnWise,
}

impl Orientation {
    pub fn for_dynamics(kind: DynamicsKind) -> Self {
        match kind {
            DynamicsKind::Ect | DynamicsKind::LinearMixing => Orientation::RowWise,
            DynamicsKind::Communication => Orientation::ColumnWise,
        }
    }
}

/// y = X · (a ⊙ w) + ε for one target node. Column k of `design` belongs to
/// node `column_nodes[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub node: usize,
    pub response: DVector<f64>,
    pub design: DMatrix<f64>,
    pub column_nodes: Vec<usize>,
    pub orientation: Orientation,
}

impl RegressionProblem {
    pub fn n_samples(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_predictors(&self) -> usize {
        self.design.ncols()
    }

    /// Writes the problem as one CSV with columns `y, node_<k>...` (1-based).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string()];
        header.extend(self.column_nodes.iter().map(|k| format!("node_{}", k + 1)));
        w.write_record(&header)?;
        for m in 0..self.n_samples() {
            let mut row = vec![self.response[m].to_string()];
            row.extend(self.design.row(m).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn other_nodes(n: usize, node: usize) -> Vec<usize> {
    (0..n).filter(|&k| k != node).collect()
}

fn check_node(panel: &TimeSeriesPanel, node: usize, expected: DynamicsKind) -> Result<()> {
    if panel.kind() != expected {
        return Err(Error::Parameter(format!(
            "panel holds {} dynamics, expected {}",
            panel.kind().as_str(),
            expected.as_str()
        )));
    }
    if node >= panel.n_nodes() {
        return Err(Error::Parameter(format!(
            "node {node} out of range for a {}-node panel",
            panel.n_nodes()
        )));
    }
    if panel.n_nodes() < 2 {
        return Err(Error::Parameter("reconstruction needs at least two nodes".into()));
    }
    Ok(())
}

/// y = currents of node i, column for node j = V_i − V_j.
pub fn build_ect_problem(panel: &TimeSeriesPanel, node: usize) -> Result<RegressionProblem> {
    check_node(panel, node, DynamicsKind::Ect)?;
    let column_nodes = other_nodes(panel.n_nodes(), node);
    let v = &panel.series;
    let design = DMatrix::from_fn(panel.n_samples(), column_nodes.len(), |m, k| {
        v[(m, node)] - v[(m, column_nodes[k])]
    });
    Ok(RegressionProblem {
        node,
        response: panel.responses.column(node).into_owned(),
        design,
        column_nodes,
        orientation: Orientation::RowWise,
    })
}

fn select_columns(panel: &TimeSeriesPanel, node: usize, orientation: Orientation) -> RegressionProblem {
    let column_nodes = other_nodes(panel.n_nodes(), node);
    let design = panel.series.select_columns(&column_nodes);
    RegressionProblem {
        node,
        response: panel.responses.column(node).into_owned(),
        design,
        column_nodes,
        orientation,
    }
}

/// y = incoming flux of i, columns = outgoing fluxes of the other nodes.
pub fn build_comm_problem(panel: &TimeSeriesPanel, node: usize) -> Result<RegressionProblem> {
    check_node(panel, node, DynamicsKind::Communication)?;
    Ok(select_columns(panel, node, Orientation::ColumnWise))
}

/// y = series of node i, columns = the other nodes' series.
pub fn build_mixing_problem(panel: &TimeSeriesPanel, node: usize) -> Result<RegressionProblem> {
    check_node(panel, node, DynamicsKind::LinearMixing)?;
    Ok(select_columns(panel, node, Orientation::RowWise))
}

pub fn build_problem(panel: &TimeSeriesPanel, node: usize) -> Result<RegressionProblem> {
    match panel.kind() {
        DynamicsKind::Ect => build_ect_problem(panel, node),
        DynamicsKind::Communication => build_comm_problem(panel, node),
        DynamicsKind::LinearMixing => build_mixing_problem(panel, node),
    }
}

pub fn build_all(panel: &TimeSeriesPanel) -> Result<Vec<RegressionProblem>> {
    (0..panel.n_nodes()).map(|i| build_problem(panel, i)).collect()
}

/// A solved per-node problem: inclusion probabilities and coefficient
/// means aligned with `column_nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSolution {
    pub node: usize,
    pub theta: DVector<f64>,
    pub mu: DVector<f64>,
    pub column_nodes: Vec<usize>,
    pub orientation: Orientation,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub network: WeightedNetwork,
    /// Per-node solutions in node order.
    pub solutions: Vec<NodeSolution>,
    pub runtime_seconds: f64,
}

impl ReconstructionResult {
    pub fn total_iterations(&self) -> usize {
        self.solutions.iter().map(|s| s.iterations).sum()
    }
}

/// ŵ = μ where θ > threshold, else 0, placed into row or column `node`.
pub fn assemble_network(solutions: Vec<NodeSolution>, threshold: f64, runtime_seconds: f64) -> Result<ReconstructionResult> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let n = solutions.len();
    let mut slots: Vec<Option<NodeSolution>> = vec![None; n];
    for s in solutions {
        if s.node >= n {
            return Err(Error::Assembly(format!("solution for node {} in a {n}-node assembly", s.node)));
        }
        if s.theta.len() != s.column_nodes.len() || s.mu.len() != s.column_nodes.len() {
            return Err(Error::Assembly(format!("solution for node {} has mismatched lengths", s.node)));
        }
        if s.column_nodes.iter().any(|&k| k >= n || k == s.node) {
            return Err(Error::Assembly(format!("solution for node {} has an invalid column map", s.node)));
        }
        let node = s.node;
        if slots[node].replace(s).is_some() {
            return Err(Error::Assembly(format!("duplicate solution for node {node}")));
        }
    }
    let mut weights = DMatrix::zeros(n, n);
    let mut ordered = Vec::with_capacity(n);
    for (node, slot) in slots.into_iter().enumerate() {
        let s = slot.ok_or_else(|| Error::Assembly(format!("missing solution for node {node}")))?;
        for (k, &other) in s.column_nodes.iter().enumerate() {
            let value = if s.theta[k] > threshold { s.mu[k] } else { 0.0 };
            let (i, j) = match s.orientation {
                Orientation::RowWise => (node, other),
                Orientation::ColumnWise => (other, node),
            };
            weights[(i, j)] = value;
        }
        ordered.push(s);
    }
    Ok(ReconstructionResult {
        network: WeightedNetwork::from_weights(weights)?,
        solutions: ordered,
        runtime_seconds,
    })
}

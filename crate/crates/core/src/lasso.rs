//! L1-penalised least squares baseline.
//!
//! Minimises (1/2M)‖y − Xw‖² + λ‖w‖₁ by cyclic coordinate descent on the
//! Gram matrix, warm-started down a log-spaced grid from
//! λ_max = ‖Xᵀy‖∞/M, with k-fold cross-validation to choose λ. There is no
//! intercept; standardisation only rescales columns to unit mean square.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeriesPanel;
use crate::error::{Error, Result};
use crate::problem::{self, NodeSolution, ReconstructionResult, RegressionProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub k_folds: usize,
    /// Bound on the subgradient optimality residual.
    pub tol: f64,
    /// Sweep cap per λ.
    pub max_iters: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            n_lambdas: 100,
            lambda_min_ratio: 1e-3,
            k_folds: 5,
            tol: 1e-7,
            max_iters: 100_000,
            standardize: true,
            seed: 0,
        }
    }
}

impl LassoOptions {
    fn validate(&self) -> Result<()> {
        if self.n_lambdas == 0 {
            return Err(Error::Parameter("n_lambdas must be positive".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::Parameter(format!("lambda_min_ratio must be in (0, 1), got {}", self.lambda_min_ratio)));
        }
        if self.k_folds < 2 {
            return Err(Error::Parameter(format!("k_folds must be at least 2, got {}", self.k_folds)));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Parameter("tol and max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// One point of a regularisation path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    /// On the original column scale.
    pub coefficients: DVector<f64>,
    /// Optimality residual at return, in the scale the problem was solved in.
    pub kkt_residual: f64,
    pub sweeps: usize,
}

/// Result of a single coordinate-descent solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: DVector<f64>,
    pub kkt_residual: f64,
    pub sweeps: usize,
    /// Objective value before the first sweep and after each sweep.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub mean_mse: f64,
    pub se_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoCvResult {
    pub best_lambda: f64,
    pub best_index: usize,
    pub coefficients: DVector<f64>,
    pub cv_table: Vec<CvRow>,
    /// Coordinate-descent sweeps spent on the full-data path.
    pub sweeps: usize,
}

impl LassoCvResult {
    pub fn write_cv_table(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.cv_table {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cv_table_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.cv_table {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Sufficient statistics of a (possibly rescaled) data set.
struct Gram {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    m: f64,
    /// w_original = w_scaled / scale
    scale: DVector<f64>,
}

impl Gram {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>, standardize: bool) -> Self {
        let m = x.nrows() as f64;
        let p = x.ncols();
        let scale = if standardize {
            DVector::from_fn(p, |j, _| {
                let rms = (x.column(j).norm_squared() / m).sqrt();
                if rms > 0.0 {
                    1.0 / rms
                } else {
                    1.0
                }
            })
        } else {
            DVector::from_element(p, 1.0)
        };
        let mut xtx = x.tr_mul(x);
        let mut xty = x.tr_mul(y);
        for j in 0..p {
            xty[j] *= scale[j];
            for k in 0..p {
                xtx[(j, k)] *= scale[j] * scale[k];
            }
        }
        Self { xtx, xty, yty: y.norm_squared(), m, scale }
    }

    fn lambda_max(&self) -> f64 {
        self.xty.amax() / self.m
    }

    fn objective(&self, w: &DVector<f64>, xtxw: &DVector<f64>, lambda: f64) -> f64 {
        let quad = self.yty - 2.0 * w.dot(&self.xty) + w.dot(xtxw);
        quad.max(0.0) / (2.0 * self.m) + lambda * w.lp_norm(1)
    }

    /// max_j violation of 0 ∈ ∂F(w)_j.
    fn kkt_residual(&self, w: &DVector<f64>, xtxw: &DVector<f64>, lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..w.len() {
            let grad = (xtxw[j] - self.xty[j]) / self.m;
            let v = if w[j] > 0.0 {
                (grad + lambda).abs()
            } else if w[j] < 0.0 {
                (grad - lambda).abs()
            } else {
                (grad.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Cyclic coordinate descent from `w` (scaled coordinates).
    fn descend(&self, w: &mut DVector<f64>, lambda: f64, tol: f64, max_iters: usize, trace: bool) -> LassoFit {
        let p = w.len();
        let mut xtxw = &self.xtx * &*w;
        let mut objective_trace = Vec::new();
        if trace {
            objective_trace.push(self.objective(w, &xtxw, lambda));
        }
        let mut kkt = self.kkt_residual(w, &xtxw, lambda);
        let mut sweeps = 0;
        let mut pattern = sign_pattern(w);
        let mut stable = 0usize;
        while kkt > tol && sweeps < max_iters {
            for j in 0..p {
                let a = self.xtx[(j, j)];
                if a <= 0.0 {
                    continue;
                }
                let old = w[j];
                let z = self.xty[j] - xtxw[j] + a * old;
                let new = soft_threshold(z, self.m * lambda) / a;
                if new != old {
                    xtxw.axpy(new - old, &self.xtx.column(j), 1.0);
                    w[j] = new;
                }
            }
            sweeps += 1;
            kkt = self.kkt_residual(w, &xtxw, lambda);
            let current = sign_pattern(w);
            if current == pattern {
                stable += 1;
            } else {
                pattern = current;
                stable = 0;
            }
            if kkt > tol && (stable == 3 || (stable > 0 && stable % 50 == 0)) {
                if let Some((polished, polished_xtxw, polished_kkt)) = self.polish(&pattern, lambda, tol) {
                    *w = polished;
                    xtxw = polished_xtxw;
                    kkt = polished_kkt;
                }
            }
            if trace {
                objective_trace.push(self.objective(w, &xtxw, lambda));
            }
        }
        LassoFit {
            coefficients: w.component_mul(&self.scale),
            kkt_residual: kkt,
            sweeps,
            objective_trace,
        }
    }
}

fn sign_pattern(w: &DVector<f64>) -> Vec<i8> {
    w.iter().map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 }).collect()
}

impl Gram {
    /// Once coordinate descent has settled on a support and sign pattern,
    /// the optimum restricted to it solves G_AA w_A = (Xᵀy)_A − Mλ s_A.
    /// The candidate is accepted only if it keeps the signs and meets the
    /// optimality tolerance on every coordinate.
    fn polish(&self, pattern: &[i8], lambda: f64, tol: f64) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let active: Vec<usize> = (0..pattern.len()).filter(|&j| pattern[j] != 0).collect();
        if active.is_empty() {
            return None;
        }
        let k = active.len();
        let g = DMatrix::from_fn(k, k, |a, b| self.xtx[(active[a], active[b])]);
        let rhs = DVector::from_fn(k, |a, _| self.xty[active[a]] - self.m * lambda * f64::from(pattern[active[a]]));
        let sol = g.cholesky()?.solve(&rhs);
        if active.iter().zip(sol.iter()).any(|(&j, &v)| v * f64::from(pattern[j]) <= 0.0) {
            return None;
        }
        let mut w = DVector::zeros(pattern.len());
        for (&j, &v) in active.iter().zip(sol.iter()) {
            w[j] = v;
        }
        let xtxw = &self.xtx * &w;
        let kkt = self.kkt_residual(&w, &xtxw, lambda);
        (kkt <= tol).then_some((w, xtxw, kkt))
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Parameter(format!("design must be non-empty, got {}x{}", x.nrows(), x.ncols())));
    }
    if x.nrows() != y.len() {
        return Err(Error::Parameter(format!(
            "design has {} rows but response has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("non-finite entries in design or response".into()));
    }
    Ok(())
}

/// Log-spaced grid from `lambda_max` down to `lambda_max · ratio`.
pub fn lambda_grid(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (n - 1) as f64;
    (0..n).map(|i| lambda_max * (step * i as f64).exp()).collect()
}

/// Solves at a single λ from zero, recording the objective after each sweep.
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
    check_inputs(x, y)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let gram = Gram::new(x, y, opts.standardize);
    let mut w = DVector::zeros(x.ncols());
    Ok(gram.descend(&mut w, lambda, opts.tol, opts.max_iters, true))
}

fn path_on(gram: &Gram, lambdas: &[f64], tol: f64, max_iters: usize) -> Vec<PathPoint> {
    let mut w = DVector::zeros(gram.xty.len());
    lambdas
        .iter()
        .map(|&lambda| {
            let fit = gram.descend(&mut w, lambda, tol, max_iters, false);
            PathPoint { lambda, coefficients: fit.coefficients, kkt_residual: fit.kkt_residual, sweeps: fit.sweeps }
        })
        .collect()
}

/// Warm-started path over the default grid for (X, y).
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LassoOptions) -> Result<Vec<PathPoint>> {
    check_inputs(x, y)?;
    opts.validate()?;
    let gram = Gram::new(x, y, opts.standardize);
    let grid = lambda_grid(gram.lambda_max(), opts.n_lambdas, opts.lambda_min_ratio);
    Ok(path_on(&gram, &grid, opts.tol, opts.max_iters))
}

/// Path over a caller-supplied, decreasing λ sequence.
pub fn lasso_path_with(x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64], opts: &LassoOptions) -> Result<Vec<PathPoint>> {
    check_inputs(x, y)?;
    if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::Parameter("lambdas must be finite and nonnegative".into()));
    }
    let gram = Gram::new(x, y, opts.standardize);
    Ok(path_on(&gram, lambdas, opts.tol, opts.max_iters))
}

/// Fold index of each row after a seeded shuffle.
pub fn fold_assignment(m: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; m];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    folds
}

fn select_rows(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let xs = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
    let ys = DVector::from_fn(rows.len(), |i, _| y[rows[i]]);
    (xs, ys)
}

/// k-fold cross-validation on the full-data λ grid; picks the λ with the
/// smallest mean held-out squared error and returns the full-data
/// coefficients there.
pub fn lasso_cv(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LassoOptions) -> Result<LassoCvResult> {
    check_inputs(x, y)?;
    opts.validate()?;
    let m = x.nrows();
    if m < opts.k_folds {
        return Err(Error::Parameter(format!("{} samples cannot form {} folds", m, opts.k_folds)));
    }
    let gram = Gram::new(x, y, opts.standardize);
    let grid = lambda_grid(gram.lambda_max(), opts.n_lambdas, opts.lambda_min_ratio);
    let full = path_on(&gram, &grid, opts.tol, opts.max_iters);

    let folds = fold_assignment(m, opts.k_folds, opts.seed);
    let fold_mse: Vec<Vec<f64>> = (0..opts.k_folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..m).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..m).filter(|&i| folds[i] == f).collect();
            let (xt, yt) = select_rows(x, y, &train);
            let (xv, yv) = select_rows(x, y, &test);
            let path = path_on(&Gram::new(&xt, &yt, opts.standardize), &grid, opts.tol, opts.max_iters);
            path.iter()
                .map(|pt| (&yv - &xv * &pt.coefficients).norm_squared() / test.len() as f64)
                .collect()
        })
        .collect();

    let k = opts.k_folds as f64;
    let cv_table: Vec<CvRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let vals: Vec<f64> = fold_mse.iter().map(|f| f[i]).collect();
            let mean = vals.iter().sum::<f64>() / k;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            CvRow { lambda, mean_mse: mean, se_mse: (var / k).sqrt() }
        })
        .collect();

    // first minimum, i.e. the largest λ among ties
    let best_index = cv_table
        .iter()
        .enumerate()
        .fold(0, |best, (i, row)| if row.mean_mse < cv_table[best].mean_mse { i } else { best });
    let sweeps = full.iter().take(best_index + 1).map(|p| p.sweeps).sum();
    Ok(LassoCvResult {
        best_lambda: grid[best_index],
        best_index,
        coefficients: full[best_index].coefficients.clone(),
        cv_table,
        sweeps,
    })
}

/// Cross-validated lasso for one built problem; the fold seed is offset by
/// the node index.
pub fn solve_problem(problem: &RegressionProblem, opts: &LassoOptions) -> Result<NodeSolution> {
    let node_opts = LassoOptions { seed: opts.seed.wrapping_add(problem.node as u64), ..*opts };
    let cv = lasso_cv(&problem.design, &problem.response, &node_opts)?;
    let theta = cv.coefficients.map(|w| if w != 0.0 { 1.0 } else { 0.0 });
    Ok(NodeSolution {
        node: problem.node,
        theta,
        mu: cv.coefficients,
        column_nodes: problem.column_nodes.clone(),
        orientation: problem.orientation,
        iterations: cv.sweeps,
    })
}

/// Same per-node problems as the Bayesian solver, with an edge wherever the
/// selected coefficient is nonzero.
pub fn lasso_reconstruct(panel: &TimeSeriesPanel, opts: &LassoOptions) -> Result<ReconstructionResult> {
    opts.validate()?;
    let start = Instant::now();
    let problems = problem::build_all(panel)?;
    let solutions = problems
        .par_iter()
        .map(|p| solve_problem(p, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut result = problem::assemble_network(solutions, 0.5, 0.0)?;
    result.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

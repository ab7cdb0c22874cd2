//! Experiment runner: generates networks, simulates dynamics, reconstructs
//! with each method and records metrics, one row per method and replicate.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets;
use crate::dynamics::{
    simulate_communication, simulate_ect, simulate_linear_mixing, CommConfig, DynamicsKind, EctConfig, PanelMeta,
    TimeSeriesPanel,
};
use crate::error::{Error, Result};
use crate::lasso::{lasso_reconstruct, LassoOptions};
use crate::metrics::{
    cohesion_index, mean_cohesion, mean_nmi, nmf_communities, CiSummary, LabeledPartition, MetricsReport, NmfOptions,
};
use crate::network::{generate, reweight_uniform, GeneratorKind, GeneratorSpec, WeightedNetwork};
use crate::problem::ReconstructionResult;
use crate::vbr::{vbr_reconstruct, Hyperparams, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// σ sweep on BA and WS topologies.
    #[serde(rename = "exp1_ba_ws")]
    Exp1BaWs,
    /// Power-law exponent sweep on scale-free topologies.
    #[serde(rename = "exp2_sf_gamma")]
    Exp2SfGamma,
    /// Runtime against network size.
    #[serde(rename = "exp3_scaling")]
    Exp3Scaling,
    /// A fixed real topology.
    #[serde(rename = "exp4_real")]
    Exp4Real,
    /// Stock price panel.
    #[serde(rename = "exp5_stock")]
    Exp5Stock,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Exp1BaWs => "exp1_ba_ws",
            ExperimentKind::Exp2SfGamma => "exp2_sf_gamma",
            ExperimentKind::Exp3Scaling => "exp3_scaling",
            ExperimentKind::Exp4Real => "exp4_real",
            ExperimentKind::Exp5Stock => "exp5_stock",
        }
    }

    fn id(self) -> u64 {
        match self {
            ExperimentKind::Exp1BaWs => 1,
            ExperimentKind::Exp2SfGamma => 2,
            ExperimentKind::Exp3Scaling => 3,
            ExperimentKind::Exp4Real => 4,
            ExperimentKind::Exp5Stock => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vbr,
    Lasso,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vbr => "vbr",
            Method::Lasso => "lasso",
        }
    }
}

/// Flat experiment configuration. Every key has a default, so a config
/// file only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dynamics: DynamicsKind,
    pub n_nodes: usize,
    /// Network sizes for the scaling experiment.
    pub n_nodes_grid: Vec<usize>,
    pub n_samples: usize,
    /// When set, each cell uses M = ⌈ratio · N⌉ instead of `n_samples`.
    pub n_samples_ratio: Option<f64>,
    pub sigma_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    /// Random topologies for the σ sweep.
    pub topologies: Vec<GeneratorKind>,
    pub ba_edges_per_node: usize,
    pub ws_mean_degree: usize,
    pub ws_rewire_prob: f64,
    pub weight_range: (f64, f64),
    /// Bundled topology name or network file for the real-topology run.
    pub network: String,
    pub n_replicates: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threshold: f64,
    pub vbr_max_iters: usize,
    pub vbr_tol: f64,
    pub lasso_n_lambdas: usize,
    pub lasso_lambda_min_ratio: f64,
    pub lasso_k_folds: usize,
    pub lasso_tol: f64,
    pub lasso_standardize: bool,
    /// Run replicates concurrently.
    pub parallel: bool,
    pub prices: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub nmf_restarts: usize,
    pub null_shuffles: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Exp1BaWs,
            dynamics: DynamicsKind::Ect,
            n_nodes: 50,
            n_nodes_grid: vec![50, 100, 200],
            n_samples: 50,
            n_samples_ratio: None,
            sigma_grid: vec![0.1, 0.4, 0.7, 1.0],
            gamma_grid: vec![-3.0, -2.5, -2.0],
            topologies: vec![GeneratorKind::Ba, GeneratorKind::Ws],
            ba_edges_per_node: 2,
            ws_mean_degree: 4,
            ws_rewire_prob: 0.1,
            weight_range: (2.0, 3.0),
            network: "karate".into(),
            n_replicates: 20,
            methods: vec![Method::Vbr, Method::Lasso],
            seed: 1,
            output_dir: PathBuf::from("results"),
            threshold: 0.5,
            vbr_max_iters: 500,
            vbr_tol: 1e-6,
            lasso_n_lambdas: 100,
            lasso_lambda_min_ratio: 1e-3,
            lasso_k_folds: 5,
            lasso_tol: 1e-7,
            lasso_standardize: true,
            parallel: true,
            prices: None,
            labels: None,
            nmf_restarts: 100,
            null_shuffles: 20,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for one experiment.
    pub fn for_experiment(kind: ExperimentKind) -> Self {
        let base = Self { experiment: kind, ..Self::default() };
        match kind {
            ExperimentKind::Exp1BaWs => base,
            ExperimentKind::Exp2SfGamma => Self { n_nodes: 100, sigma_grid: vec![0.1], ..base },
            ExperimentKind::Exp3Scaling => Self {
                n_samples_ratio: Some(1.0),
                sigma_grid: vec![0.1],
                topologies: vec![GeneratorKind::Ba],
                methods: vec![Method::Vbr],
                ..base
            },
            ExperimentKind::Exp4Real => Self { sigma_grid: vec![0.0], ..base },
            ExperimentKind::Exp5Stock => Self { dynamics: DynamicsKind::LinearMixing, ..base },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Every key with its resolved value.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_replicates == 0 {
            return bad("n_replicates must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        if self.n_samples_ratio.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return bad("n_samples_ratio must be positive");
        }
        if self.sigma_grid.is_empty() && self.experiment != ExperimentKind::Exp5Stock {
            return bad("sigma_grid must not be empty");
        }
        if self.sigma_grid.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("sigma values must be finite and nonnegative");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must be in (0, 1)");
        }
        match self.experiment {
            ExperimentKind::Exp1BaWs if self.topologies.is_empty() => bad("topologies must not be empty"),
            ExperimentKind::Exp2SfGamma if self.gamma_grid.is_empty() => bad("gamma_grid must not be empty"),
            ExperimentKind::Exp3Scaling if self.n_nodes_grid.is_empty() => bad("n_nodes_grid must not be empty"),
            ExperimentKind::Exp5Stock if self.prices.is_none() || self.labels.is_none() => {
                bad("the stock experiment needs prices and labels")
            }
            _ => Ok(()),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { max_iters: self.vbr_max_iters, tol: self.vbr_tol, ..SolverOptions::default() }
    }

    pub fn lasso_options(&self, seed: u64) -> LassoOptions {
        LassoOptions {
            n_lambdas: self.lasso_n_lambdas,
            lambda_min_ratio: self.lasso_lambda_min_ratio,
            k_folds: self.lasso_k_folds,
            tol: self.lasso_tol,
            standardize: self.lasso_standardize,
            seed,
            ..LassoOptions::default()
        }
    }

    /// Grid cells in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        let samples = |n: usize| match self.n_samples_ratio {
            Some(r) if n > 0 => (r * n as f64).ceil() as usize,
            _ => self.n_samples,
        };
        let mut push = |topology: String, n_nodes, gamma, sigma| {
            cells.push(Cell { index: cells.len(), topology, n_nodes, n_samples: samples(n_nodes), gamma, sigma });
        };
        match self.experiment {
            ExperimentKind::Exp1BaWs => {
                for kind in &self.topologies {
                    for &s in &self.sigma_grid {
                        push(topology_name(*kind).into(), self.n_nodes, None, s);
                    }
                }
            }
            ExperimentKind::Exp2SfGamma => {
                for &g in &self.gamma_grid {
                    for &s in &self.sigma_grid {
                        push("sf".into(), self.n_nodes, Some(g), s);
                    }
                }
            }
            ExperimentKind::Exp3Scaling => {
                let kind = self.topologies.first().copied().unwrap_or(GeneratorKind::Ba);
                for &n in &self.n_nodes_grid {
                    for &s in &self.sigma_grid {
                        push(topology_name(kind).into(), n, None, s);
                    }
                }
            }
            ExperimentKind::Exp4Real => {
                for &s in &self.sigma_grid {
                    push(self.network.clone(), 0, None, s);
                }
            }
            ExperimentKind::Exp5Stock => {}
        }
        cells
    }
}

fn topology_name(kind: GeneratorKind) -> &'static str {
    match kind {
        GeneratorKind::Ba => "ba",
        GeneratorKind::Ws => "ws",
        GeneratorKind::PowerLawSf => "sf",
    }
}

/// One point of an experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub topology: String,
    /// 0 when the size comes from a fixed topology.
    pub n_nodes: usize,
    pub n_samples: usize,
    pub gamma: Option<f64>,
    pub sigma: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of seed components.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6a09_e667_f3bc_c908, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Seed of replicate `rep` in cell `cell` of an experiment.
pub fn replicate_seed(master: u64, experiment: ExperimentKind, cell: usize, rep: usize) -> u64 {
    derive_seed(&[master, experiment.id(), cell as u64, rep as u64])
}

/// One method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub dynamics: String,
    #[serde(rename = "N")]
    pub n_nodes: usize,
    #[serde(rename = "M")]
    pub n_samples: usize,
    pub sigma: f64,
    pub gamma: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub error: Option<f64>,
    pub runtime_seconds: Option<f64>,
    pub iterations: Option<usize>,
    pub topology: String,
    /// Set when the replicate could not be completed.
    pub failure: Option<String>,
}

/// Mean and sample standard deviation of one metric within a cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean: Some(mean), sd }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub dynamics: String,
    pub topology: String,
    pub n_nodes: usize,
    pub n_samples: usize,
    pub sigma: f64,
    pub gamma: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub tpr: Moments,
    pub tnr: Moments,
    pub error: Moments,
    pub runtime_seconds: Moments,
}

#[derive(Serialize)]
struct FlatSummary<'a> {
    experiment: &'a str,
    method: &'a str,
    dynamics: &'a str,
    topology: &'a str,
    #[serde(rename = "N")]
    n_nodes: usize,
    #[serde(rename = "M")]
    n_samples: usize,
    sigma: f64,
    gamma: Option<f64>,
    n_ok: usize,
    n_failed: usize,
    tpr_mean: Option<f64>,
    tpr_sd: Option<f64>,
    tnr_mean: Option<f64>,
    tnr_sd: Option<f64>,
    error_mean: Option<f64>,
    error_sd: Option<f64>,
    runtime_mean: Option<f64>,
    runtime_sd: Option<f64>,
}

/// Per-(cell, method) moments, in the order the cells first appear.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let key = |r: &ResultRow| {
        (r.method.clone(), r.topology.clone(), r.n_nodes, r.n_samples, r.sigma.to_bits(), r.gamma.map(f64::to_bits))
    };
    let mut keys = Vec::new();
    for r in rows {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for k in keys {
        let group: Vec<&ResultRow> = rows.iter().filter(|r| key(r) == k).collect();
        let ok: Vec<&&ResultRow> = group.iter().filter(|r| r.failure.is_none()).collect();
        let collect = |f: fn(&ResultRow) -> Option<f64>| Moments::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        let first = group[0];
        out.push(SummaryRow {
            experiment: first.experiment.clone(),
            method: first.method.clone(),
            dynamics: first.dynamics.clone(),
            topology: first.topology.clone(),
            n_nodes: first.n_nodes,
            n_samples: first.n_samples,
            sigma: first.sigma,
            gamma: first.gamma,
            n_ok: ok.len(),
            n_failed: group.len() - ok.len(),
            tpr: collect(|r| r.tpr),
            tnr: collect(|r| r.tnr),
            error: collect(|r| r.error),
            runtime_seconds: collect(|r| r.runtime_seconds),
        });
    }
    out
}

/// Writes the resolved configuration as `#`-prefixed lines, then the rows.
fn write_with_config<T: Serialize>(out: &mut impl Write, cfg: &ExperimentConfig, rows: impl Iterator<Item = T>) -> Result<()> {
    for line in cfg.to_toml()?.lines() {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results(rows: &[ResultRow], cfg: &ExperimentConfig, out: &mut impl Write) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows to write".into()));
    }
    write_with_config(out, cfg, rows.iter())
}

pub fn write_summary(summary: &[SummaryRow], cfg: &ExperimentConfig, out: &mut impl Write) -> Result<()> {
    let flat = summary.iter().map(|s| FlatSummary {
        experiment: &s.experiment,
        method: &s.method,
        dynamics: &s.dynamics,
        topology: &s.topology,
        n_nodes: s.n_nodes,
        n_samples: s.n_samples,
        sigma: s.sigma,
        gamma: s.gamma,
        n_ok: s.n_ok,
        n_failed: s.n_failed,
        tpr_mean: s.tpr.mean,
        tpr_sd: s.tpr.sd,
        tnr_mean: s.tnr.mean,
        tnr_sd: s.tnr.sd,
        error_mean: s.error.mean,
        error_sd: s.error.sd,
        runtime_mean: s.runtime_seconds.mean,
        runtime_sd: s.runtime_seconds.sd,
    });
    write_with_config(out, cfg, flat)
}

/// Reads a results file back, recovering the embedded configuration.
pub fn read_results(path: impl AsRef<Path>) -> Result<(ExperimentConfig, Vec<ResultRow>)> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut config_text = String::new();
    let mut body = String::new();
    for line in reader.lines() {
        let line = line?;
        match line.strip_prefix("# ") {
            Some(rest) if body.is_empty() => {
                config_text.push_str(rest);
                config_text.push('\n');
            }
            _ => {
                body.push_str(&line);
                body.push('\n');
            }
        }
    }
    let cfg: ExperimentConfig = toml::from_str(&config_text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok((cfg, rows))
}

pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

/// Ground truth network of one replicate.
fn replicate_network(cfg: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<WeightedNetwork> {
    let net_seed = derive_seed(&[seed, 1]);
    let spec = |kind| GeneratorSpec {
        kind,
        n_nodes: cell.n_nodes,
        ba_edges_per_node: cfg.ba_edges_per_node,
        ws_mean_degree: cfg.ws_mean_degree,
        ws_rewire_prob: cfg.ws_rewire_prob,
        sf_gamma: cell.gamma.unwrap_or(-2.5),
        weight_range: cfg.weight_range,
        seed: net_seed,
        ..GeneratorSpec::default()
    };
    match cfg.experiment {
        ExperimentKind::Exp4Real => {
            let topology = datasets::load_topology(&cell.topology)?;
            reweight_uniform(&topology, cfg.weight_range, net_seed)
        }
        ExperimentKind::Exp2SfGamma => generate(&spec(GeneratorKind::PowerLawSf)),
        _ => {
            let kind = match cell.topology.as_str() {
                "ws" => GeneratorKind::Ws,
                "sf" => GeneratorKind::PowerLawSf,
                _ => GeneratorKind::Ba,
            };
            generate(&spec(kind))
        }
    }
}

/// Simulates `dynamics` on `net`; returns the panel and the network the
/// estimate should be compared against.
pub fn simulate(
    net: &WeightedNetwork,
    dynamics: DynamicsKind,
    n_samples: usize,
    sigma: f64,
    seed: u64,
) -> Result<(TimeSeriesPanel, WeightedNetwork)> {
    match dynamics {
        DynamicsKind::Ect => Ok((simulate_ect(net, &EctConfig::new(n_samples, sigma, seed))?, net.clone())),
        DynamicsKind::Communication => simulate_communication(net, &CommConfig::new(n_samples, sigma, seed)),
        DynamicsKind::LinearMixing => Ok((simulate_linear_mixing(net, n_samples, sigma, seed)?, net.clone())),
    }
}

/// Reconstructs with one method under the configuration's solver settings.
pub fn reconstruct(cfg: &ExperimentConfig, method: Method, panel: &TimeSeriesPanel, seed: u64) -> Result<ReconstructionResult> {
    match method {
        Method::Vbr => vbr_reconstruct(panel, &Hyperparams::default(), &cfg.solver_options(), cfg.threshold),
        Method::Lasso => lasso_reconstruct(panel, &cfg.lasso_options(derive_seed(&[seed, 3]))),
    }
}

fn run_replicate(cfg: &ExperimentConfig, cell: &Cell, rep: usize) -> Vec<ResultRow> {
    let seed = replicate_seed(cfg.seed, cfg.experiment, cell.index, rep);
    let row = |method: Method, n_nodes: usize| ResultRow {
        experiment: cfg.experiment.as_str().into(),
        method: method.as_str().into(),
        dynamics: cfg.dynamics.as_str().into(),
        n_nodes,
        n_samples: cell.n_samples,
        sigma: cell.sigma,
        gamma: cell.gamma,
        replicate: rep,
        seed,
        tpr: None,
        tnr: None,
        error: None,
        runtime_seconds: None,
        iterations: None,
        topology: cell.topology.clone(),
        failure: None,
    };
    let data = replicate_network(cfg, cell, seed)
        .and_then(|net| simulate(&net, cfg.dynamics, cell.n_samples, cell.sigma, derive_seed(&[seed, 2])));
    let (panel, truth) = match data {
        Ok(d) => d,
        Err(e) => {
            return cfg
                .methods
                .iter()
                .map(|&m| ResultRow { failure: Some(e.to_string()), ..row(m, cell.n_nodes) })
                .collect()
        }
    };
    cfg.methods
        .iter()
        .map(|&m| {
            let base = row(m, truth.n_nodes());
            match reconstruct(cfg, m, &panel, seed)
                .and_then(|r| Ok((MetricsReport::compare(&truth, &r.network, r.runtime_seconds)?, r.total_iterations())))
            {
                Ok((report, iterations)) => ResultRow {
                    tpr: report.tpr,
                    tnr: report.tnr,
                    error: report.error,
                    runtime_seconds: Some(report.runtime_seconds),
                    iterations: Some(iterations),
                    ..base
                },
                Err(e) => ResultRow { failure: Some(e.to_string()), ..base },
            }
        })
        .collect()
}

/// Runs every cell and replicate of a synthetic or real-topology experiment.
/// Failed replicates become rows with `failure` set. Rows are ordered by
/// cell, then replicate, then method.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if cfg.experiment == ExperimentKind::Exp5Stock {
        return Err(Error::Config("the stock experiment runs through run_stock".into()));
    }
    let jobs: Vec<(Cell, usize)> = cfg
        .cells()
        .into_iter()
        .flat_map(|c| (0..cfg.n_replicates).map(move |r| (c.clone(), r)))
        .collect();
    let nested: Vec<Vec<ResultRow>> = if cfg.parallel {
        jobs.par_iter().map(|(c, r)| run_replicate(cfg, c, *r)).collect()
    } else {
        jobs.iter().map(|(c, r)| run_replicate(cfg, c, *r)).collect()
    };
    let rows: Vec<ResultRow> = nested.into_iter().flatten().collect();
    let summary = summarize(&rows);
    Ok(ExperimentOutput { rows, summary })
}

/// Runs an experiment and writes `results.csv` and `summary.csv` into the
/// configured output directory.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(PathBuf, PathBuf)> {
    let output = run_experiment(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let results = cfg.output_dir.join("results.csv");
    let summary = cfg.output_dir.join("summary.csv");
    write_results(&output.rows, cfg, &mut fs::File::create(&results)?)?;
    write_summary(&output.summary, cfg, &mut fs::File::create(&summary)?)?;
    Ok((results, summary))
}

// ---------------------------------------------------------------------------
// Stock panels

/// Prices with tickers and industry labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StockData {
    pub tickers: Vec<String>,
    /// Trading days × stocks.
    pub prices: DMatrix<f64>,
    pub labels: LabeledPartition,
    pub industries: Vec<String>,
}

/// Header row of tickers, then one row of decimal prices per day.
pub fn read_prices(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let path = path.as_ref();
    let ingest = |line: usize, msg: String| Error::Ingestion(format!("{}:{line}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let tickers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if tickers.is_empty() || tickers.iter().any(String::is_empty) {
        return Err(ingest(1, "header must name every column".into()));
    }
    let mut values = Vec::new();
    let mut days = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != tickers.len() {
            return Err(ingest(line, format!("expected {} prices, found {}", tickers.len(), record.len())));
        }
        for (field, ticker) in record.iter().zip(&tickers) {
            let v: f64 = field
                .parse()
                .map_err(|_| ingest(line, format!("non-numeric price {field:?} for {ticker}")))?;
            if !v.is_finite() {
                return Err(ingest(line, format!("non-finite price for {ticker}")));
            }
            values.push(v);
        }
        days += 1;
    }
    if days == 0 {
        return Err(ingest(1, "no price rows".into()));
    }
    Ok((tickers.clone(), DMatrix::from_row_slice(days, tickers.len(), &values)))
}

/// `ticker,industry` rows, optionally under a header with those names.
pub fn read_labels(path: impl AsRef<Path>, tickers: &[String]) -> Result<(LabeledPartition, Vec<String>)> {
    let path = path.as_ref();
    let ingest = |line: usize, msg: String| Error::Ingestion(format!("{}:{line}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut map = std::collections::HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 1;
        if record.len() != 2 {
            return Err(ingest(line, "expected ticker,industry".into()));
        }
        if line == 1 && &record[0] == "ticker" && &record[1] == "industry" {
            continue;
        }
        if map.insert(record[0].to_string(), record[1].to_string()).is_some() {
            return Err(ingest(line, format!("duplicate ticker {}", &record[0])));
        }
    }
    let names = tickers
        .iter()
        .map(|t| map.get(t).cloned().ok_or_else(|| ingest(0, format!("no industry for ticker {t}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledPartition::from_names(&names))
}

pub fn read_stock_data(prices: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<StockData> {
    let (tickers, prices) = read_prices(prices)?;
    let (labels, industries) = read_labels(labels, &tickers)?;
    Ok(StockData { tickers, prices, labels, industries })
}

/// Linear-mixing panel from prices. Each column is centred first; the
/// regression has no intercept, so the price level would otherwise act as
/// a shared regressor.
pub fn price_panel(prices: &DMatrix<f64>, seed: u64) -> Result<TimeSeriesPanel> {
    let mut centred = prices.clone();
    for mut col in centred.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let meta = PanelMeta { dynamics: DynamicsKind::LinearMixing, sigma: 0.0, seed, signal_free_nodes: Vec::new() };
    TimeSeriesPanel::new(centred.clone(), centred, meta)
}

/// Randomly rewires a directed network by double edge swaps
/// (a→b, c→d) ⇒ (a→d, c→b), keeping every in- and out-degree. Swaps that
/// would create a self-loop or a duplicate edge are skipped.
pub fn degree_preserving_shuffle(net: &WeightedNetwork, n_swaps: usize, seed: u64) -> WeightedNetwork {
    let mut edges = net.edges();
    let n = net.n_nodes();
    let mut present = DMatrix::<u8>::zeros(n, n);
    for &(i, j, _) in &edges {
        present[(i, j)] = 1;
    }
    if edges.len() >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_swaps {
            let x = rng.random_range(0..edges.len());
            let y = rng.random_range(0..edges.len());
            let (a, b, wab) = edges[x];
            let (c, d, wcd) = edges[y];
            if x == y || a == d || c == b || present[(a, d)] == 1 || present[(c, b)] == 1 {
                continue;
            }
            present[(a, b)] = 0;
            present[(c, d)] = 0;
            present[(a, d)] = 1;
            present[(c, b)] = 1;
            edges[x] = (a, d, wab);
            edges[y] = (c, b, wcd);
        }
    }
    let mut w = DMatrix::zeros(n, n);
    for (i, j, v) in edges {
        w[(i, j)] = v;
    }
    WeightedNetwork::from_weights(w).expect("shuffled weights are finite")
}

#[derive(Debug, Clone)]
pub struct StockMethodReport {
    pub method: Method,
    pub result: ReconstructionResult,
    pub ci: Vec<Option<f64>>,
    pub ci_summary: CiSummary,
    /// Mean NMI of the NMF partitions against the industry labels.
    pub mean_nmi: f64,
    /// Mean CI averaged over degree-preserving shuffles of the estimate.
    pub null_mean_ci: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StockOptions {
    pub threshold: f64,
    pub nmf_restarts: usize,
    pub null_shuffles: usize,
    pub nmf: NmfOptions,
}

impl Default for StockOptions {
    fn default() -> Self {
        Self { threshold: 0.5, nmf_restarts: 100, null_shuffles: 20, nmf: NmfOptions::default() }
    }
}

/// Reconstructs the mixing network of a price panel with each method and
/// scores it against the industry labels.
pub fn run_stock_data(data: &StockData, methods: &[Method], seed: u64, opts: &StockOptions) -> Result<Vec<StockMethodReport>> {
    if methods.is_empty() {
        return Err(Error::Parameter("no methods requested".into()));
    }
    let panel = price_panel(&data.prices, seed)?;
    let cfg = ExperimentConfig { threshold: opts.threshold, ..ExperimentConfig::for_experiment(ExperimentKind::Exp5Stock) };
    let k = data.labels.n_classes().max(1);
    methods
        .iter()
        .map(|&method| {
            let result = reconstruct(&cfg, method, &panel, seed)?;
            let ci = cohesion_index(&result.network, &data.labels)?;
            let ci_summary = mean_cohesion(&ci);
            let partitions: Vec<LabeledPartition> =
                nmf_communities(&result.network, k, opts.nmf_restarts, derive_seed(&[seed, 4]), &opts.nmf)?
                    .into_iter()
                    .map(|f| f.partition)
                    .collect();
            let mean_nmi = mean_nmi(&partitions, &data.labels)?;
            let swaps = 10 * result.network.directed_edge_count();
            let null: Vec<f64> = (0..opts.null_shuffles)
                .map(|r| {
                    let shuffled = degree_preserving_shuffle(&result.network, swaps, derive_seed(&[seed, 5, r as u64]));
                    cohesion_index(&shuffled, &data.labels).map(|c| mean_cohesion(&c).mean)
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            let null_mean_ci = (!null.is_empty()).then(|| null.iter().sum::<f64>() / null.len() as f64);
            Ok(StockMethodReport { method, result, ci, ci_summary, mean_nmi, null_mean_ci })
        })
        .collect()
}

pub fn run_stock(
    prices_csv: impl AsRef<Path>,
    labels_csv: impl AsRef<Path>,
    methods: &[Method],
    seed: u64,
    opts: &StockOptions,
) -> Result<Vec<StockMethodReport>> {
    let data = read_stock_data(prices_csv, labels_csv)?;
    run_stock_data(&data, methods, seed, opts)
}

/// Writes one CSV row per method with the CI and NMI figures.
pub fn write_stock_report(reports: &[StockMethodReport], out: &mut impl Write) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        method: &'static str,
        edges: usize,
        mean_ci: Option<f64>,
        ci_included: usize,
        ci_excluded: usize,
        null_mean_ci: Option<f64>,
        mean_nmi: f64,
        runtime_seconds: f64,
    }
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(Row {
            method: r.method.as_str(),
            edges: r.result.network.directed_edge_count(),
            mean_ci: r.ci_summary.mean,
            ci_included: r.ci_summary.n_included,
            ci_excluded: r.ci_summary.n_excluded,
            null_mean_ci: r.null_mean_ci,
            mean_nmi: r.mean_nmi,
            runtime_seconds: r.result.runtime_seconds,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Synthetic prices with `n_blocks` industries of `block_size` stocks: each
/// stock follows its industry's factor plus idiosyncratic N(0, noise²)
/// variation, with iid N(0, 1) factors.
pub fn planted_partition_prices(
    n_blocks: usize,
    block_size: usize,
    n_days: usize,
    noise: f64,
    seed: u64,
) -> Result<StockData> {
    if n_blocks == 0 || block_size == 0 || n_days == 0 || !(noise >= 0.0) {
        return Err(Error::Parameter("planted panel needs positive sizes and noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let factors = DMatrix::from_fn(n_days, n_blocks, |_, _| std.sample(&mut rng));
    let n = n_blocks * block_size;
    let prices = DMatrix::from_fn(n_days, n, |t, i| 10.0 + factors[(t, i / block_size)] + noise * std.sample(&mut rng));
    let tickers = (0..n).map(|i| format!("S{i:03}")).collect();
    let industries: Vec<String> = (0..n_blocks).map(|b| format!("industry_{b}")).collect();
    let labels = LabeledPartition::new((0..n).map(|i| i / block_size).collect());
    Ok(StockData { tickers, prices, labels, industries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_part() {
        let base = replicate_seed(1, ExperimentKind::Exp1BaWs, 0, 0);
        assert_eq!(base, replicate_seed(1, ExperimentKind::Exp1BaWs, 0, 0));
        assert_ne!(base, replicate_seed(2, ExperimentKind::Exp1BaWs, 0, 0));
        assert_ne!(base, replicate_seed(1, ExperimentKind::Exp2SfGamma, 0, 0));
        assert_ne!(base, replicate_seed(1, ExperimentKind::Exp1BaWs, 1, 0));
        assert_ne!(base, replicate_seed(1, ExperimentKind::Exp1BaWs, 0, 1));
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
    }

    #[test]
    fn config_round_trips_with_defaults() {
        let cfg = ExperimentConfig::from_toml("experiment = \"exp3_scaling\"\nn_replicates = 3\n").unwrap();
        assert_eq!(cfg.n_replicates, 3);
        assert_eq!(cfg.n_nodes_grid, vec![50, 100, 200]);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("n_replicates = 0").is_err());
        assert!(ExperimentConfig::from_toml("methods = []").is_err());
        assert!(ExperimentConfig::from_toml("no_such_key = 1").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"exp2_sf_gamma\"\ngamma_grid = []").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"exp5_stock\"").is_err());
    }

    #[test]
    fn cells_follow_grids() {
        let cfg = ExperimentConfig::default();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0].topology, "ba");
        assert_eq!(cells[4].topology, "ws");
        let cfg = ExperimentConfig::for_experiment(ExperimentKind::Exp2SfGamma);
        assert_eq!(cfg.cells().iter().map(|c| c.gamma.unwrap()).collect::<Vec<_>>(), vec![-3.0, -2.5, -2.0]);
        let cfg = ExperimentConfig::for_experiment(ExperimentKind::Exp3Scaling);
        assert_eq!(cfg.cells().iter().map(|c| c.n_nodes).collect::<Vec<_>>(), vec![50, 100, 200]);
    }

    #[test]
    fn moments() {
        let m = Moments::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, Some(2.0));
        assert_eq!(m.sd, Some(1.0));
        assert_eq!(Moments::of(&[4.0]).sd, None);
        assert_eq!(Moments::of(&[]), Moments::default());
    }

    #[test]
    fn shuffle_keeps_degrees() {
        let net = generate(&GeneratorSpec::ba(30, 2, 4)).unwrap();
        let shuffled = degree_preserving_shuffle(&net, 500, 1);
        assert_eq!(shuffled.directed_edge_count(), net.directed_edge_count());
        let in_deg = |n: &WeightedNetwork| n.adjacency().row_sum().iter().map(|&v| v as usize).collect::<Vec<_>>();
        assert_eq!(shuffled.out_degrees(), net.out_degrees());
        assert_eq!(in_deg(&shuffled), in_deg(&net));
        assert_ne!(shuffled, net);
    }

    #[test]
    fn constant_prices_give_no_edges() {
        let data = StockData {
            tickers: (0..6).map(|i| i.to_string()).collect(),
            prices: DMatrix::from_element(40, 6, 12.5),
            labels: LabeledPartition::new(vec![0, 0, 0, 1, 1, 1]),
            industries: vec!["a".into(), "b".into()],
        };
        let opts = StockOptions { nmf_restarts: 3, null_shuffles: 2, ..Default::default() };
        for r in run_stock_data(&data, &[Method::Vbr, Method::Lasso], 1, &opts).unwrap() {
            assert_eq!(r.result.network.directed_edge_count(), 0, "{:?}", r.method);
        }
    }
}

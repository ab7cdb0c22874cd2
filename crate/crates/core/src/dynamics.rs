//! Nodal time series simulated on a ground-truth network.
//!
//! A [`TimeSeriesPanel`] pairs an M×N matrix of observed node states (the
//! design side: voltages, outgoing fluxes, prices) with an M×N matrix of
//! responses (currents, incoming fluxes, prices again). Noise is only ever
//! added to the responses.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::WeightedNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    /// Electrical current transport under Kirchhoff's law.
    Ect,
    Communication,
    /// Each node's series is a weighted combination of the others'.
    LinearMixing,
}

impl DynamicsKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DynamicsKind::Ect => "ect",
            DynamicsKind::Communication => "communication",
            DynamicsKind::LinearMixing => "linear_mixing",
        }
    }
}

/// Provenance carried alongside a panel and written to its sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub dynamics: DynamicsKind,
    pub sigma: f64,
    pub seed: u64,
    /// Nodes whose response carries no signal (communication dynamics
    /// with no in-neighbours).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signal_free_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    pub series: DMatrix<f64>,
    pub responses: DMatrix<f64>,
    pub meta: PanelMeta,
}

impl TimeSeriesPanel {
    pub fn new(series: DMatrix<f64>, responses: DMatrix<f64>, meta: PanelMeta) -> Result<Self> {
        if series.shape() != responses.shape() {
            return Err(Error::Parameter(format!(
                "series {:?} and responses {:?} must share dimensions",
                series.shape(),
                responses.shape()
            )));
        }
        if series.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("panel contains non-finite entries".into()));
        }
        Ok(Self { series, responses, meta })
    }

    pub fn kind(&self) -> DynamicsKind {
        self.meta.dynamics
    }

    pub fn n_samples(&self) -> usize {
        self.series.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.series.ncols()
    }
}

/// Alternating-current voltages V_i(t) = v̄ sin((ω + Δω_i) t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EctConfig {
    pub v_bar: f64,
    pub omega: f64,
    pub delta_omega_range: (f64, f64),
    pub n_samples: usize,
    /// Explicit sampling instants. When absent, `n_samples` instants are
    /// drawn uniformly from `[0, time_horizon)` and sorted.
    pub sample_times: Option<Vec<f64>>,
    pub time_horizon: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for EctConfig {
    fn default() -> Self {
        Self {
            v_bar: 1.0,
            omega: 1e3,
            delta_omega_range: (0.0, 20.0),
            n_samples: 50,
            sample_times: None,
            time_horizon: 100.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl EctConfig {
    pub fn new(n_samples: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            n_samples,
            noise_sigma,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommConfig {
    pub n_samples: usize,
    pub outflux_range: (f64, f64),
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            outflux_range: (0.0, 20.0),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl CommConfig {
    pub fn new(n_samples: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            n_samples,
            noise_sigma,
            seed,
            ..Self::default()
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!("{name} must satisfy lo <= hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

// Noise gets its own stream so that the clean signal does not depend on σ.
fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn simulate_ect(net: &WeightedNetwork, cfg: &EctConfig) -> Result<TimeSeriesPanel> {
    check_sigma(cfg.noise_sigma)?;
    check_range("delta_omega_range", cfg.delta_omega_range)?;
    for (i, j, w) in net.edges() {
        if !(w > 0.0) {
            return Err(Error::Model(format!(
                "conductance on edge ({}, {}) must be positive, got {w}",
                i + 1,
                j + 1
            )));
        }
    }
    if cfg.n_samples == 0 {
        return Err(Error::Parameter("n_samples must be positive".into()));
    }
    let n = net.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let times = match &cfg.sample_times {
        Some(t) => {
            if t.len() != cfg.n_samples {
                return Err(Error::Parameter(format!(
                    "{} sample times given for n_samples = {}",
                    t.len(),
                    cfg.n_samples
                )));
            }
            t.clone()
        }
        None => {
            if !(cfg.time_horizon > 0.0) {
                return Err(Error::Parameter("time horizon must be positive".into()));
            }
            let mut t: Vec<f64> = (0..cfg.n_samples)
                .map(|_| rng.random_range(0.0..cfg.time_horizon))
                .collect();
            t.sort_by(f64::total_cmp);
            t
        }
    };
    let detuning: Vec<f64> = (0..n).map(|_| uniform(&mut rng, cfg.delta_omega_range)).collect();
    let voltages = DMatrix::from_fn(times.len(), n, |m, i| {
        cfg.v_bar * ((cfg.omega + detuning[i]) * times[m]).sin()
    });
    let currents = ect_currents(net, &voltages);
    let meta = PanelMeta {
        dynamics: DynamicsKind::Ect,
        sigma: 0.0,
        seed: cfg.seed,
        signal_free_nodes: Vec::new(),
    };
    let clean = TimeSeriesPanel::new(voltages, currents, meta)?;
    add_noise(&clean, cfg.noise_sigma, noise_seed(cfg.seed))
}

/// I_{i,t} = Σ_j w_ij (V_i − V_j) for every sample.
pub fn ect_currents(net: &WeightedNetwork, voltages: &DMatrix<f64>) -> DMatrix<f64> {
    let w = net.weights();
    let strength: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    let mut currents = voltages * w.transpose();
    for m in 0..voltages.nrows() {
        for i in 0..voltages.ncols() {
            currents[(m, i)] = strength[i] * voltages[(m, i)] - currents[(m, i)];
        }
    }
    currents
}

/// Simulates communication dynamics. The incoming weights of `net` are
/// first normalized to sum to one per node; the normalized network is
/// returned as the ground truth the panel was generated from.
pub fn simulate_communication(net: &WeightedNetwork, cfg: &CommConfig) -> Result<(TimeSeriesPanel, WeightedNetwork)> {
    check_sigma(cfg.noise_sigma)?;
    check_range("outflux_range", cfg.outflux_range)?;
    if cfg.outflux_range.0 < 0.0 {
        return Err(Error::Parameter("outgoing fluxes must be nonnegative".into()));
    }
    if cfg.n_samples == 0 {
        return Err(Error::Parameter("n_samples must be positive".into()));
    }
    let mut truth = net.clone();
    let signal_free_nodes = truth.normalize_incoming();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = truth.n_nodes();
    let outflux = DMatrix::from_fn(cfg.n_samples, n, |_, _| uniform(&mut rng, cfg.outflux_range));
    // f_i = Σ_j w_ji o_j, i.e. F = O · W
    let influx = &outflux * truth.weights();
    let meta = PanelMeta {
        dynamics: DynamicsKind::Communication,
        sigma: 0.0,
        seed: cfg.seed,
        signal_free_nodes,
    };
    let clean = TimeSeriesPanel::new(outflux, influx, meta)?;
    Ok((add_noise(&clean, cfg.noise_sigma, noise_seed(cfg.seed))?, truth))
}

/// Drivers s_kt ~ U(0, 1) iid; response of node i is Σ_{k≠i} w_ik s_kt + ε.
pub fn simulate_linear_mixing(net: &WeightedNetwork, n_samples: usize, sigma: f64, seed: u64) -> Result<TimeSeriesPanel> {
    check_sigma(sigma)?;
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.n_nodes();
    let drivers = DMatrix::from_fn(n_samples, n, |_, _| rng.random::<f64>());
    let responses = &drivers * net.weights().transpose();
    let meta = PanelMeta {
        dynamics: DynamicsKind::LinearMixing,
        sigma: 0.0,
        seed,
        signal_free_nodes: Vec::new(),
    };
    let clean = TimeSeriesPanel::new(drivers, responses, meta)?;
    add_noise(&clean, sigma, noise_seed(seed))
}

/// Adds iid N(0, σ²) noise to the responses. σ = 0 returns the panel
/// unchanged apart from the recorded σ and seed.
pub fn add_noise(panel: &TimeSeriesPanel, sigma: f64, seed: u64) -> Result<TimeSeriesPanel> {
    check_sigma(sigma)?;
    let mut out = panel.clone();
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("sigma validated");
        // Column-major walk; fixed for a given shape.
        for v in out.responses.iter_mut() {
            *v += normal.sample(&mut rng);
        }
        out.meta.sigma = sigma;
    }
    Ok(out)
}

/// File names used for a panel stored at `path`: the series CSV itself,
/// the responses CSV and the metadata sidecar.
pub fn panel_paths(path: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("panel");
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    (
        path.to_path_buf(),
        dir.join(format!("{stem}.responses.csv")),
        dir.join(format!("{stem}.meta.toml")),
    )
}

/// Writes `path` (series), `<stem>.responses.csv` and `<stem>.meta.toml`.
pub fn write_panel(panel: &TimeSeriesPanel, path: impl AsRef<Path>) -> Result<()> {
    let (series_path, responses_path, meta_path) = panel_paths(path.as_ref());
    write_matrix_csv(&panel.series, &series_path)?;
    write_matrix_csv(&panel.responses, &responses_path)?;
    let meta = toml::to_string(&panel.meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(meta_path, meta)?;
    Ok(())
}

/// Reads a panel written by [`write_panel`]. If the responses file is
/// missing the panel is taken as a price panel (linear mixing, series and
/// responses identical); if the sidecar is missing, `kind` must be given.
pub fn read_panel(path: impl AsRef<Path>, kind: Option<DynamicsKind>) -> Result<TimeSeriesPanel> {
    let (series_path, responses_path, meta_path) = panel_paths(path.as_ref());
    let series = read_matrix_csv(&series_path)?;
    let mut meta = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path)?;
        toml::from_str::<PanelMeta>(&text).map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?
    } else {
        PanelMeta {
            dynamics: kind.ok_or_else(|| {
                Error::Config(format!(
                    "no sidecar {} and no dynamics given",
                    meta_path.display()
                ))
            })?,
            sigma: 0.0,
            seed: 0,
            signal_free_nodes: Vec::new(),
        }
    };
    if let Some(k) = kind {
        meta.dynamics = k;
    }
    let responses = if responses_path.exists() {
        read_matrix_csv(&responses_path)?
    } else if meta.dynamics == DynamicsKind::LinearMixing {
        series.clone()
    } else {
        return Err(Error::Config(format!("missing responses file {}", responses_path.display())));
    };
    TimeSeriesPanel::new(series, responses, meta)
}

pub(crate) fn write_matrix_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=m.ncols()).map(|i| format!("node_{i}")))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let ncols = r.headers()?.len();
    let mut values = Vec::new();
    let mut nrows = 0;
    for (idx, rec) in r.records().enumerate() {
        let rec = rec?;
        // header is line 1
        let line = idx + 2;
        if rec.len() != ncols {
            return Err(Error::parse(path, line, format!("expected {ncols} columns, found {}", rec.len())));
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, line, format!("column {}: non-numeric value {field:?}", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("column {}: non-finite value", col + 1)));
            }
            values.push(v);
        }
        nrows += 1;
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

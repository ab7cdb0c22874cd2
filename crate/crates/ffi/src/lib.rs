//! C ABI over the `netrecon` library.
//!
//! Networks, panels and reconstruction results are opaque handles created
//! by `nr_*` constructors and released with the matching `*_free`. Every
//! fallible call returns an [`NrStatus`]; on failure a description is kept
//! per thread and can be copied out with [`nr_last_error_message`]. Panics
//! never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use netrecon::dynamics::{DynamicsKind, TimeSeriesPanel};
use netrecon::harness::{self, ExperimentConfig, Method};
use netrecon::metrics::MetricsReport;
use netrecon::nalgebra::DMatrix;
use netrecon::network::{generate, read_network, write_network, GeneratorKind, GeneratorSpec, NetworkFormat, WeightedNetwork};
use netrecon::problem::ReconstructionResult;
use netrecon::Error;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Model = 5,
    Numerical = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrGenerator {
    Ba = 0,
    Ws = 1,
    PowerLawSf = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrDynamics {
    Ect = 0,
    Communication = 1,
    LinearMixing = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrMethod {
    Vbr = 0,
    Lasso = 1,
}

/// Topology generator settings; start from [`nr_generator_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrGeneratorParams {
    pub kind: NrGenerator,
    pub n_nodes: usize,
    pub ba_edges_per_node: usize,
    pub ws_mean_degree: usize,
    pub ws_rewire_prob: f64,
    pub sf_gamma: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub seed: u64,
}

/// Reconstruction settings; start from [`nr_reconstruct_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrReconstructParams {
    pub method: NrMethod,
    pub threshold: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

/// Edge-detection and strength metrics. Undefined values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrMetrics {
    pub tpr: f64,
    pub tnr: f64,
    pub error: f64,
}

/// Opaque weighted network.
pub struct NrNetwork(WeightedNetwork);

/// Opaque time-series panel.
pub struct NrPanel(TimeSeriesPanel);

/// Opaque reconstruction outcome.
pub struct NrResult(ReconstructionResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> NrStatus {
    match e {
        Error::Parameter(_) | Error::Config(_) => NrStatus::InvalidArgument,
        Error::Io(_) => NrStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Ingestion(_) => NrStatus::Parse,
        Error::Model(_) | Error::Assembly(_) => NrStatus::Model,
        Error::Numerical(_) => NrStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            NrStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            NrStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            NrStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut *mut T, what: &'static str) -> Result<&'a mut *mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Parameter(format!("{what} is not valid UTF-8")))?;
    Ok(Path::new(s))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn nr_generator_params_default() -> NrGeneratorParams {
    let d = GeneratorSpec::default();
    NrGeneratorParams {
        kind: NrGenerator::Ba,
        n_nodes: d.n_nodes,
        ba_edges_per_node: d.ba_edges_per_node,
        ws_mean_degree: d.ws_mean_degree,
        ws_rewire_prob: d.ws_rewire_prob,
        sf_gamma: d.sf_gamma,
        weight_min: d.weight_range.0,
        weight_max: d.weight_range.1,
        seed: d.seed,
    }
}

#[no_mangle]
pub extern "C" fn nr_reconstruct_params_default() -> NrReconstructParams {
    let d = ExperimentConfig::default();
    NrReconstructParams { method: NrMethod::Vbr, threshold: d.threshold, max_iters: d.vbr_max_iters, tol: d.vbr_tol, seed: 0 }
}

/// Generates a random topology.
///
/// # Safety
/// `params` must point to a valid struct and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nr_network_generate(params: *const NrGeneratorParams, out: *mut *mut NrNetwork) -> NrStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let out = out_ptr(out, "out")?;
        let kind = match p.kind {
            NrGenerator::Ba => GeneratorKind::Ba,
            NrGenerator::Ws => GeneratorKind::Ws,
            NrGenerator::PowerLawSf => GeneratorKind::PowerLawSf,
        };
        let spec = GeneratorSpec {
            kind,
            n_nodes: p.n_nodes,
            ba_edges_per_node: p.ba_edges_per_node,
            ws_mean_degree: p.ws_mean_degree,
            ws_rewire_prob: p.ws_rewire_prob,
            sf_gamma: p.sf_gamma,
            weight_range: (p.weight_min, p.weight_max),
            seed: p.seed,
            ..GeneratorSpec::default()
        };
        *out = boxed(NrNetwork(generate(&spec)?));
        Ok(())
    })
}

/// Builds a network from an `n × n` row-major weight matrix; entry (i, j)
/// is the weight of the edge i → j.
///
/// # Safety
/// `weights` must point to `n * n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn nr_network_from_weights(n: usize, weights: *const f64, out: *mut *mut NrNetwork) -> NrStatus {
    guard(|| {
        if weights.is_null() {
            return Err(Failure::Null("weights"));
        }
        let out = out_ptr(out, "out")?;
        let len = n.checked_mul(n).ok_or_else(|| Error::Parameter("n * n overflows".into()))?;
        let data = std::slice::from_raw_parts(weights, len);
        let net = WeightedNetwork::from_weights(DMatrix::from_row_slice(n, n, data))?;
        *out = boxed(NrNetwork(net));
        Ok(())
    })
}

/// Reads a network file: Matrix Market when the name ends in `.mtx`,
/// otherwise an edge list.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nr_network_read(path: *const c_char, out: *mut *mut NrNetwork) -> NrStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = out_ptr(out, "out")?;
        *out = boxed(NrNetwork(read_network(path, NetworkFormat::from_path(path))?));
        Ok(())
    })
}

/// # Safety
/// `net` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nr_network_write(net: *const NrNetwork, path: *const c_char) -> NrStatus {
    guard(|| {
        let net = deref(net, "net")?;
        let path = path_arg(path, "path")?;
        write_network(&net.0, path, NetworkFormat::from_path(path))?;
        Ok(())
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_network_n_nodes(net: *const NrNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.n_nodes())
}

/// Copies the weight matrix row-major into `buf`, which must hold
/// `n_nodes * n_nodes` doubles.
///
/// # Safety
/// `net` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nr_network_weights(net: *const NrNetwork, buf: *mut f64, len: usize) -> NrStatus {
    guard(|| {
        let net = deref(net, "net")?;
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        let n = net.0.n_nodes();
        if len < n * n {
            return Err(Error::Parameter(format!("buffer holds {len} values, need {}", n * n)).into());
        }
        let out = std::slice::from_raw_parts_mut(buf, n * n);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = net.0.weight(i, j);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nr_network_free(net: *mut NrNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Simulates dynamics on `net`. When `truth_out` is not null it receives
/// the network a reconstruction should be scored against.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable; `truth_out` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn nr_simulate(
    net: *const NrNetwork,
    dynamics: NrDynamics,
    n_samples: usize,
    sigma: f64,
    seed: u64,
    out: *mut *mut NrPanel,
    truth_out: *mut *mut NrNetwork,
) -> NrStatus {
    guard(|| {
        let net = deref(net, "net")?;
        let out = out_ptr(out, "out")?;
        let kind = match dynamics {
            NrDynamics::Ect => DynamicsKind::Ect,
            NrDynamics::Communication => DynamicsKind::Communication,
            NrDynamics::LinearMixing => DynamicsKind::LinearMixing,
        };
        let (panel, truth) = harness::simulate(&net.0, kind, n_samples, sigma, seed)?;
        *out = boxed(NrPanel(panel));
        if let Some(t) = truth_out.as_mut() {
            *t = boxed(NrNetwork(truth));
        }
        Ok(())
    })
}

/// Sample count M and node count N of a panel; either output may be null.
///
/// # Safety
/// `panel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_panel_dims(panel: *const NrPanel, n_samples: *mut usize, n_nodes: *mut usize) -> NrStatus {
    guard(|| {
        let panel = deref(panel, "panel")?;
        if let Some(m) = n_samples.as_mut() {
            *m = panel.0.n_samples();
        }
        if let Some(n) = n_nodes.as_mut() {
            *n = panel.0.n_nodes();
        }
        Ok(())
    })
}

/// # Safety
/// `panel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nr_panel_free(panel: *mut NrPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Reconstructs the network behind a panel.
///
/// # Safety
/// `panel` and `params` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nr_reconstruct(
    panel: *const NrPanel,
    params: *const NrReconstructParams,
    out: *mut *mut NrResult,
) -> NrStatus {
    guard(|| {
        let panel = deref(panel, "panel")?;
        let p = deref(params, "params")?;
        let out = out_ptr(out, "out")?;
        let cfg = ExperimentConfig { threshold: p.threshold, vbr_max_iters: p.max_iters, vbr_tol: p.tol, ..ExperimentConfig::default() };
        cfg.validate()?;
        let method = match p.method {
            NrMethod::Vbr => Method::Vbr,
            NrMethod::Lasso => Method::Lasso,
        };
        *out = boxed(NrResult(harness::reconstruct(&cfg, method, &panel.0, p.seed)?));
        Ok(())
    })
}

/// Copies the estimated network into a new handle owned by the caller.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nr_result_network(result: *const NrResult, out: *mut *mut NrNetwork) -> NrStatus {
    guard(|| {
        let r = deref(result, "result")?;
        let out = out_ptr(out, "out")?;
        *out = boxed(NrNetwork(r.0.network.clone()));
        Ok(())
    })
}

/// Reconstruction wall time in seconds, or NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_result_runtime_seconds(result: *const NrResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.runtime_seconds)
}

/// Solver iterations summed over nodes, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_result_iterations(result: *const NrResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.total_iterations())
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nr_result_free(result: *mut NrResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Compares an estimate with the truth.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nr_evaluate(truth: *const NrNetwork, est: *const NrNetwork, out: *mut NrMetrics) -> NrStatus {
    guard(|| {
        let truth = deref(truth, "truth")?;
        let est = deref(est, "est")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let r = MetricsReport::compare(&truth.0, &est.0, 0.0)?;
        *out = NrMetrics {
            tpr: r.tpr.unwrap_or(f64::NAN),
            tnr: r.tnr.unwrap_or(f64::NAN),
            error: r.error.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dynamics::{panel_paths, read_panel, write_panel, DynamicsKind};
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, ExperimentKind, Method, StockOptions};
use crate::metrics::MetricsReport;
use crate::network::{generate, read_network, write_network, GeneratorKind, GeneratorSpec, NetworkFormat, WeightedNetwork};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "netrecon", version, about = "Weighted network reconstruction from nodal time series")]
struct Cli {
    /// Master seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random weighted topology.
    Generate(GenerateArgs),
    /// Simulate nodal time series on a network.
    Simulate(SimulateArgs),
    /// Reconstruct a network from a time-series panel.
    Reconstruct(ReconstructArgs),
    /// Compare an estimated network with the truth.
    Evaluate(EvaluateArgs),
    /// Run a configured experiment and write results and summary CSVs.
    Experiment(ExperimentArgs),
    /// Reconstruct a stock price panel and score it against industry labels.
    Stock(StockArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "ba")]
    kind: GeneratorKind,
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    edges_per_node: usize,
    #[arg(long, default_value_t = 4)]
    mean_degree: usize,
    #[arg(long, default_value_t = 0.1)]
    rewire_prob: f64,
    #[arg(long, default_value_t = -2.5, allow_hyphen_values = true)]
    gamma: f64,
    #[arg(long, default_value_t = 2.0)]
    weight_min: f64,
    #[arg(long, default_value_t = 3.0)]
    weight_max: f64,
    /// Edge-list TSV, or Matrix Market when the name ends in `.mtx`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long, value_enum, default_value = "ect")]
    dynamics: DynamicsKind,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Series CSV; responses and metadata are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the network the reconstruction should be scored
    /// against (for communication dynamics this is the normalised network).
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    panel: PathBuf,
    /// Required only when the panel has no metadata sidecar.
    #[arg(long, value_enum)]
    dynamics: Option<DynamicsKind>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    est: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StockArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "vbr,lasso")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 100)]
    nmf_restarts: usize,
    #[arg(long, default_value_t = 20)]
    null_shuffles: usize,
    /// Report CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the reconstructed networks, one edge list per method.
    #[arg(long)]
    networks_dir: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Generate(a) => cmd_generate(a, seed.unwrap_or(0)),
        Command::Simulate(a) => cmd_simulate(a, seed.unwrap_or(0)),
        Command::Reconstruct(a) => cmd_reconstruct(a, seed.unwrap_or(0)),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a, seed),
        Command::Stock(a) => cmd_stock(a, seed.unwrap_or(0)),
    }
}

fn read_net(path: &Path) -> Result<WeightedNetwork> {
    read_network(path, NetworkFormat::from_path(path))
}

fn write_net(net: &WeightedNetwork, path: &Path) -> Result<()> {
    write_network(net, path, NetworkFormat::from_path(path))
}

fn cmd_generate(a: GenerateArgs, seed: u64) -> Result<()> {
    let spec = GeneratorSpec {
        kind: a.kind,
        n_nodes: a.nodes,
        ba_edges_per_node: a.edges_per_node,
        ws_mean_degree: a.mean_degree,
        ws_rewire_prob: a.rewire_prob,
        sf_gamma: a.gamma,
        weight_range: (a.weight_min, a.weight_max),
        seed,
        ..GeneratorSpec::default()
    };
    let net = generate(&spec)?;
    write_net(&net, &a.out)?;
    println!("wrote {} nodes, {} edges to {}", net.n_nodes(), net.undirected_edge_count(), a.out.display());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    let net = read_net(&a.network)?;
    let (panel, truth) = harness::simulate(&net, a.dynamics, a.samples, a.sigma, seed)?;
    write_panel(&panel, &a.out)?;
    if let Some(path) = &a.truth_out {
        write_net(&truth, path)?;
    }
    println!("wrote {}x{} panel to {}", panel.n_samples(), panel.n_nodes(), a.out.display());
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs, seed: u64) -> Result<()> {
    let has_sidecar = panel_paths(&a.panel).2.exists();
    let panel = read_panel(&a.panel, if has_sidecar { None } else { a.dynamics })?;
    if let Some(kind) = a.dynamics {
        if kind != panel.kind() {
            return Err(Error::Config(format!(
                "panel metadata says {} but --dynamics is {}",
                panel.kind().as_str(),
                kind.as_str()
            )));
        }
    }
    let cfg = ExperimentConfig { threshold: a.threshold, vbr_max_iters: a.max_iters, vbr_tol: a.tol, ..ExperimentConfig::default() };
    cfg.validate()?;
    let result = harness::reconstruct(&cfg, a.method, &panel, seed)?;
    write_net(&result.network, &a.out)?;
    println!(
        "{}: {} edges in {:.3}s, {} iterations",
        a.method.as_str(),
        result.network.directed_edge_count(),
        result.runtime_seconds,
        result.total_iterations()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x}"))
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let truth = read_net(&a.truth)?;
    let est = read_net(&a.est)?;
    let report = MetricsReport::compare(&truth, &est, 0.0)?;
    println!("TPR={} TNR={} Error={}", fmt_opt(report.tpr), fmt_opt(report.tnr), fmt_opt(report.error));
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(dir) = a.output_dir {
        cfg.output_dir = dir;
    }
    cfg.validate()?;
    if cfg.experiment == ExperimentKind::Exp5Stock {
        let (prices, labels) = (cfg.prices.clone(), cfg.labels.clone());
        let (prices, labels) = prices.zip(labels).ok_or_else(|| Error::Config("stock experiment needs prices and labels".into()))?;
        let opts = StockOptions {
            threshold: cfg.threshold,
            nmf_restarts: cfg.nmf_restarts,
            null_shuffles: cfg.null_shuffles,
            ..StockOptions::default()
        };
        let reports = harness::run_stock(prices, labels, &cfg.methods, cfg.seed, &opts)?;
        fs::create_dir_all(&cfg.output_dir)?;
        let path = cfg.output_dir.join("stock_report.csv");
        let mut file = fs::File::create(&path)?;
        for line in cfg.to_toml()?.lines() {
            writeln!(file, "# {line}")?;
        }
        harness::write_stock_report(&reports, &mut file)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let (results, summary) = harness::run_and_write(&cfg)?;
    println!("wrote {} and {}", results.display(), summary.display());
    Ok(())
}

fn cmd_stock(a: StockArgs, seed: u64) -> Result<()> {
    let opts = StockOptions {
        threshold: a.threshold,
        nmf_restarts: a.nmf_restarts,
        null_shuffles: a.null_shuffles,
        ..StockOptions::default()
    };
    let reports = harness::run_stock(&a.prices, &a.labels, &a.methods, seed, &opts)?;
    if let Some(dir) = &a.networks_dir {
        fs::create_dir_all(dir)?;
        for r in &reports {
            write_net(&r.result.network, &dir.join(format!("{}.tsv", r.method.as_str())))?;
        }
    }
    match &a.out {
        Some(path) => harness::write_stock_report(&reports, &mut fs::File::create(path)?)?,
        None => harness::write_stock_report(&reports, &mut std::io::stdout().lock())?,
    }
    Ok(())
}

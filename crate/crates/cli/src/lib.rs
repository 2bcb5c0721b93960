//! Command-line driver for point cloud denoising.

pub mod io;

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use glr_core::solver::iteration_graph;
use glr_core::{add_gaussian_noise, denoise, evaluate, DenoiseConfig, DenoiseReport, LaplacianKind};

use crate::io::{read_cloud, write_cloud, CloudFile};

/// Environment variable capping the worker thread count (0 = automatic).
pub const THREADS_ENV: &str = "GLR_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "glr",
    version,
    about = "Point cloud denoising by graph Laplacian regularization"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Denoise a point cloud.
    Denoise(DenoiseArgs),
    /// Add Gaussian noise proportional to the cloud's diameter.
    AddNoise(AddNoiseArgs),
    /// Compare an estimate against ground truth (MSE, SNR, MCD).
    Eval(EvalArgs),
    /// Build one iteration's patch graph and dump its edges.
    GraphInfo(GraphInfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScheduleR {
    Auto,
    Value(f64),
}

impl FromStr for ScheduleR {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Self::Value(v)),
            _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Radius {
    Off,
    Multiplier(f64),
}

/// Multiplier used by `--radius-multiplier on`.
const DEFAULT_RADIUS_MULTIPLIER: f64 = 3.0;

impl FromStr for Radius {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "off" => Ok(Self::Off),
            "on" => Ok(Self::Multiplier(DEFAULT_RADIUS_MULTIPLIER)),
            _ => match s.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(Self::Multiplier(v)),
                _ => Err(format!("expected `off`, `on` or a positive number, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Args)]
struct GraphParams {
    /// Patch size k [default: 30].
    #[arg(long)]
    k: Option<usize>,
    /// Candidate neighbor patches K [default: 16].
    #[arg(long)]
    patch_neighbors: Option<usize>,
    /// Fraction of points used as patch centers [default: 0.5].
    #[arg(long)]
    center_fraction: Option<f64>,
    /// Projection gap above which planar interpolation is used [default: 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Degree normalization parameter; weights scale as (ρ_m ρ_n)^(-1/γ) [default: 0.5].
    #[arg(long)]
    gamma: Option<f64>,
    /// Kernel cutoff r = C_r·ε: `off`, `on` (C_r = 3) or a multiplier [default: off].
    #[arg(long)]
    radius_multiplier: Option<Radius>,
    /// TOML file with configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Noise level the input was generated with, if known.
    #[arg(long)]
    sigma: Option<f64>,
    #[command(flatten)]
    graph: GraphParams,
    /// Denominator of the μ schedule, or `auto` to derive it from --sigma [default: auto].
    #[arg(long)]
    schedule_r: Option<ScheduleR>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-iteration report as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write PLY output as ascii instead of binary little-endian.
    #[arg(long)]
    ply_ascii: bool,
    #[arg(long, hide = true)]
    normalized_laplacian: bool,
}

#[derive(Debug, Args)]
struct AddNoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Noise standard deviation as a fraction of the cloud diameter.
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    ply_ascii: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    /// Noise level recorded in the sigma column.
    #[arg(long)]
    sigma: Option<f64>,
    /// Also write the CSV row to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GraphInfoArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    graph: GraphParams,
    /// Edge list output: m, n, d_mn, w_mn.
    #[arg(long)]
    dump: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code: 0 on success, 2 on usage errors and 1
/// on runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => n,
            Err(_) => {
                eprintln!("error: {THREADS_ENV} must be a nonnegative integer, got `{v}`");
                return 2;
            }
        },
        Err(_) => 0,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Denoise(args) => run_denoise(args),
        Command::AddNoise(args) => run_add_noise(args),
        Command::Eval(args) => run_eval(args),
        Command::GraphInfo(args) => run_graph_info(args),
    }
}

fn load(path: &Path) -> Result<glr_core::PointCloud> {
    let file = CloudFile::from_path(path, false)?;
    read_cloud(&file).with_context(|| format!("reading {}", path.display()))
}

fn save(cloud: &glr_core::PointCloud, path: &Path, ascii: bool) -> Result<()> {
    let file = CloudFile::from_path(path, ascii)?;
    write_cloud(cloud, &file).with_context(|| format!("writing {}", path.display()))
}

fn base_config(params: &GraphParams) -> Result<DenoiseConfig> {
    let mut config = match &params.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => DenoiseConfig::default(),
    };
    if let Some(k) = params.k {
        config.patch_size = k;
    }
    if let Some(k) = params.patch_neighbors {
        config.patch_neighbors = k;
    }
    if let Some(f) = params.center_fraction {
        config.center_fraction = f;
    }
    if let Some(t) = params.tau {
        config.tau = t;
    }
    if let Some(g) = params.gamma {
        config.gamma = g;
    }
    match params.radius_multiplier {
        Some(Radius::Off) => config.radius_multiplier = None,
        Some(Radius::Multiplier(c)) => config.radius_multiplier = Some(c),
        None => {}
    }
    Ok(config)
}

fn denoise_config(args: &DenoiseArgs) -> Result<DenoiseConfig> {
    let mut config = base_config(&args.graph)?;
    if let Some(s) = args.sigma {
        config.sigma_level = Some(s);
    }
    match args.schedule_r {
        Some(ScheduleR::Auto) => config.schedule_r = None,
        Some(ScheduleR::Value(r)) => config.schedule_r = Some(r),
        None => {}
    }
    if let Some(m) = args.max_iters {
        config.max_iterations = m;
    }
    if let Some(s) = args.seed {
        config.rng_seed = s;
    }
    if args.normalized_laplacian {
        config.laplacian = LaplacianKind::Normalized;
    }
    Ok(config)
}

fn run_denoise(args: DenoiseArgs) -> Result<()> {
    let config = denoise_config(&args)?;
    let cloud = load(&args.input)?;
    let (out, report) = denoise(&cloud, &config)?;
    save(&out, &args.output, args.ply_ascii)?;
    if let Some(path) = &args.report {
        write_report(path, &config, &report).with_context(|| format!("writing {}", path.display()))?;
    }
    log::info!("{} iterations, converged: {}", report.iterations_run, report.converged);
    Ok(())
}

/// Column order of the per-iteration report.
pub const REPORT_COLUMNS: [&str; 13] = [
    "iteration",
    "mu",
    "mean_displacement",
    "pcg_iterations_x",
    "pcg_iterations_y",
    "pcg_iterations_z",
    "pcg_converged",
    "patch_count",
    "edge_count",
    "epsilon",
    "objective_before",
    "objective_after",
    "interpolation_fallbacks",
];

/// Writes the effective config and run summary as `#` comment lines,
/// followed by one CSV row per iteration.
fn write_report(path: &Path, config: &DenoiseConfig, report: &DenoiseReport) -> Result<()> {
    let mut file = File::create(path)?;
    let effective = DenoiseConfig {
        schedule_r: Some(config.effective_schedule_r()),
        ..config.clone()
    };
    for line in toml::to_string(&effective)?.lines() {
        writeln!(file, "# {line}")?;
    }
    writeln!(file, "# iterations_run = {}", report.iterations_run)?;
    writeln!(file, "# converged = {}", report.converged)?;
    writeln!(file, "# diameter = {:?}", report.diameter)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(REPORT_COLUMNS)?;
    for s in &report.per_iteration {
        w.write_record([
            s.iteration.to_string(),
            format!("{:?}", s.mu),
            format!("{:?}", s.mean_displacement),
            s.pcg_iterations[0].to_string(),
            s.pcg_iterations[1].to_string(),
            s.pcg_iterations[2].to_string(),
            s.pcg_converged.to_string(),
            s.patch_count.to_string(),
            s.edge_count.to_string(),
            format!("{:?}", s.epsilon),
            format!("{:?}", s.objective_before),
            format!("{:?}", s.objective_after),
            s.interpolation_fallbacks.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_add_noise(args: AddNoiseArgs) -> Result<()> {
    if args.sigma.is_nan() || args.sigma < 0.0 {
        bail!("--sigma must be nonnegative");
    }
    let cloud = load(&args.input)?;
    let noisy = add_gaussian_noise(&cloud, args.sigma, args.seed)?;
    save(&noisy, &args.output, args.ply_ascii)
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let truth = load(&args.truth)?;
    let estimate = load(&args.estimate)?;
    let m = evaluate(&truth, &estimate);
    let mut buf = csv::Writer::from_writer(Vec::new());
    buf.write_record(["cloud", "sigma", "mse", "snr_db", "mcd"])?;
    buf.write_record([
        args.estimate.display().to_string(),
        args.sigma.map(|s| s.to_string()).unwrap_or_default(),
        m.mse.to_string(),
        m.snr_db.to_string(),
        m.mcd.to_string(),
    ])?;
    let bytes = buf.into_inner()?;
    std::io::stdout().write_all(&bytes)?;
    if let Some(path) = &args.csv {
        std::fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run_graph_info(args: GraphInfoArgs) -> Result<()> {
    let config = base_config(&args.graph)?;
    let cloud = load(&args.input)?;
    config.validate(cloud.len())?;
    let it = iteration_graph(&cloud, &config)?;
    let mut w = csv::Writer::from_path(&args.dump).with_context(|| format!("writing {}", args.dump.display()))?;
    w.write_record(["m", "n", "d_mn", "w_mn"])?;
    for e in &it.graph.edges {
        w.write_record([
            e.m.to_string(),
            e.n.to_string(),
            format!("{:?}", e.distance),
            format!("{:?}", e.weight),
        ])?;
    }
    w.flush()?;
    println!(
        "patches {}  candidate edges {}  edges {}  epsilon {}",
        it.patches.len(),
        it.graph.candidate_count,
        it.graph.edges.len(),
        it.graph.epsilon
    );
    Ok(())
}

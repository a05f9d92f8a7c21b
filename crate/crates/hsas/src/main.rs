use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsas::config::{ExperimentConfig, Kernel};
use hsas::harness::{child_seed, child_seed_id, emit_outputs, run_experiment, OutputFormats};
use hsas::io::{read_path, sha256_hex, write_json, write_kde, write_kernel, write_path, write_periodogram, ReportRecord};
use hsas::{Error, Result};
use hsas_core::inference::{estimate_alpha_regression, estimate_hfsm, RegressionPolicy};
use hsas_core::mollify::{discretize_kernel, mollify_path, MollifierSpec};
use hsas_core::pathgen::{simulate_hfsm, PathSample, SpectralGrid, Spacing, TimeGrid};
use hsas_core::spectral::{extract_peaks, kde, periodogram, uniform_grid, DEFAULT_EXCLUSION_BINS, DEFAULT_KDE_POINTS};
use hsas_core::stable::StabilityIndex;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "hsas", version, about = "Simulation and inference for harmonizable stable processes")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for experiments; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Experiment configuration (TOML, or a metadata.json from a previous run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an HFSM path to `path.csv`.
    Simulate(SimulateArgs),
    /// Mollify a path; also writes the discretized kernel.
    Mollify(MollifyArgs),
    /// Periodogram of a path.
    Periodogram(SourceArgs),
    /// Kernel density estimate of the extracted peak frequencies.
    Kde(KdeArgs),
    /// Regression estimate of alpha from two mollifications.
    EstimateAlpha(EstimateAlphaArgs),
    /// Closed-form estimates of alpha and H.
    EstimateHfsm(EstimateHfsmArgs),
    /// Monte Carlo experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    hurst: f64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Spectral cutoff; with `--x-min` and `--cells` replaces the default grid.
    #[arg(long, requires_all = ["x_min", "cells"])]
    x_max: Option<f64>,
    #[arg(long)]
    x_min: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    /// Index of the replicate whose child seed drives the generator.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelArg::V1)]
    kernel: KernelArg,
    /// Truncation half-width of the discretized kernel.
    #[arg(long, default_value_t = 100)]
    l: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    V1,
    V2,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::V1 => Kernel::V1,
            KernelArg::V2 => Kernel::V2,
        }
    }
}

#[derive(Args)]
struct MollifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 20.0)]
    theta: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long)]
    input: PathBuf,
    /// Treat the input as already mollified.
    #[arg(long, conflicts_with = "theta")]
    mollified: bool,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 20.0)]
    theta: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PeakArgs {
    #[arg(long, default_value_t = 200)]
    n_peaks: usize,
    #[arg(long, default_value_t = DEFAULT_EXCLUSION_BINS)]
    exclusion_bins: usize,
}

#[derive(Args)]
struct DensityArgs {
    /// Silverman's rule when absent.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Upper end of the evaluation grid; defaults to five times the largest theta.
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_KDE_POINTS)]
    kde_points: usize,
}

#[derive(Args)]
struct KdeArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    peaks: PeakArgs,
    #[command(flatten)]
    density: DensityArgs,
}

#[derive(Args)]
struct EstimateAlphaArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 20.0)]
    theta1: f64,
    #[arg(long, default_value_t = 30.0)]
    theta2: f64,
    #[command(flatten)]
    peaks: PeakArgs,
    #[command(flatten)]
    density: DensityArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateHfsmArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 20.0)]
    theta: f64,
    #[command(flatten)]
    peaks: PeakArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    table: Table,
    /// Overrides the replicate count of the configuration.
    #[arg(long)]
    replicates: Option<usize>,
    /// Emit `z,rho_true,rho_hat,theta` overlays for the first replicate.
    #[arg(long)]
    plot: bool,
    /// Also write per-replicate results.
    #[arg(long)]
    replicate_csv: bool,
    /// Restrict to these kernels.
    #[arg(long, value_enum, value_delimiter = ',')]
    kernel: Vec<KernelArg>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    hurst: Vec<f64>,
    /// Restrict to designs with these sample sizes.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Restrict to these peak counts.
    #[arg(long, value_delimiter = ',')]
    n_peaks: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Table {
    Table1,
    Table2,
    Table3,
    Custom,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let out = |given: &Option<PathBuf>, name: &str| given.clone().unwrap_or_else(|| cli.out_dir.join(name));
    match &cli.command {
        Command::Simulate(a) => {
            let grid = match (a.x_max, a.x_min, a.cells) {
                (Some(x_max), Some(x_min), Some(m)) => SpectralGrid::new(x_max, x_min, m, Spacing::Linear)?,
                _ => SpectralGrid::default_for_mesh(a.delta)?,
            };
            let mut rng = ChaCha8Rng::from_seed(child_seed(cli.seed, a.replicate));
            let times = TimeGrid::from_mesh(a.delta, a.n)?;
            let mut p = simulate_hfsm(StabilityIndex::new(a.alpha)?, a.hurst, &grid, &times, &mut rng)?;
            p.meta.seed = Some(child_seed_id(cli.seed, a.replicate));
            let dst = out(&a.output, "path.csv");
            write_path(&dst, &p)?;
            println!("{}", dst.display());
        }
        Command::Mollify(a) => {
            let path = read_path(&a.input)?;
            let kernel = discretize_kernel(&Kernel::from(a.kernel.kernel).spec(a.theta, a.kernel.l, path.delta)?)?;
            let m = mollify_path(&path, &kernel)?;
            let dst = out(&a.output, "mollified.csv");
            write_path(&dst, &m)?;
            write_kernel(&dst.with_file_name("kernel.csv"), &kernel)?;
            println!("{}", dst.display());
        }
        Command::Periodogram(a) => {
            let pg = periodogram(&source(a)?)?;
            let dst = out(&a.output, "periodogram.csv");
            write_periodogram(&dst, &pg)?;
            println!("{}", dst.display());
        }
        Command::Kde(a) => {
            let f = extract_peaks(&periodogram(&source(&a.source)?)?, a.peaks.n_peaks, a.peaks.exclusion_bins)?;
            let z_max = a.density.grid_max.unwrap_or(5.0 * a.source.theta);
            let d = kde(&f, &uniform_grid(z_max, a.density.kde_points), a.density.bandwidth)?;
            let dst = out(&a.source.output, "kde.csv");
            write_kde(&dst, &d)?;
            println!("{}", dst.display());
        }
        Command::EstimateAlpha(a) => {
            let path = read_path(&a.input)?;
            let k = Kernel::from(a.kernel.kernel);
            let (s1, s2) = (k.spec(a.theta1, a.kernel.l, path.delta)?, k.spec(a.theta2, a.kernel.l, path.delta)?);
            let policy = RegressionPolicy {
                exclusion_bins: a.peaks.exclusion_bins,
                kde_points: a.density.kde_points,
                grid_max: a.density.grid_max,
                bandwidth: a.density.bandwidth,
                ..RegressionPolicy::default()
            };
            let mut r = estimate_alpha_regression(&path, &s1, &s2, a.peaks.n_peaks, &policy)?;
            r.seed = path.meta.seed;
            report(&r, &out(&a.output, "estimate_alpha.json"), &a.input)?;
        }
        Command::EstimateHfsm(a) => {
            let path = read_path(&a.input)?;
            let spec = Kernel::from(a.kernel.kernel).spec(a.theta, a.kernel.l, path.delta)?;
            let pg = periodogram(&mollify_path(&path, &discretize_kernel(&spec)?)?)?;
            let mut r = estimate_hfsm(&extract_peaks(&pg, a.peaks.n_peaks, a.peaks.exclusion_bins)?, &spec)?;
            r.seed = path.meta.seed;
            report(&r, &out(&a.output, "estimate_hfsm.json"), &a.input)?;
        }
        Command::Experiment(a) => experiment(&cli, a)?,
    }
    Ok(())
}

/// The input path, mollified unless `--mollified` is given.
fn source(a: &SourceArgs) -> Result<PathSample> {
    let path = read_path(&a.input)?;
    if a.mollified {
        return Ok(path);
    }
    let spec: MollifierSpec = Kernel::from(a.kernel.kernel).spec(a.theta, a.kernel.l, path.delta)?;
    Ok(mollify_path(&path, &discretize_kernel(&spec)?)?)
}

fn report(r: &hsas_core::inference::EstimationReport, dst: &Path, input: &Path) -> Result<()> {
    let bytes = std::fs::read(input).map_err(hsas::error::io_err(input))?;
    let rec = ReportRecord::new(r, sha256_hex(&bytes));
    write_json(dst, &rec)?;
    println!("{}", serde_json::to_string_pretty(&rec).map_err(hsas::error::json_err(dst))?);
    Ok(())
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    let mut cfg = match (&cli.config, a.table) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Table::Custom) => return Err(Error::Config("`experiment custom` needs --config".into())),
        (None, t) => {
            let name = match t {
                Table::Table1 => "table1",
                Table::Table2 => "table2",
                _ => "table3",
            };
            let mut c = ExperimentConfig::preset(name).expect("known preset");
            c.master_seed = cli.seed;
            c
        }
    };
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    cfg.plot |= a.plot;
    if !a.kernel.is_empty() {
        let ks: Vec<Kernel> = a.kernel.iter().map(|&k| k.into()).collect();
        cfg.kernels.retain(|k| ks.contains(k));
    }
    if !a.alpha.is_empty() {
        cfg.alphas.retain(|x| a.alpha.contains(x));
    }
    if !a.hurst.is_empty() {
        cfg.hursts.retain(|x| a.hurst.contains(x));
    }
    if !a.n.is_empty() {
        cfg.designs.retain(|d| a.n.contains(&d.n));
    }
    if !a.n_peaks.is_empty() {
        for d in &mut cfg.designs {
            d.peaks.retain(|p| a.n_peaks.contains(p));
        }
        cfg.designs.retain(|d| !d.peaks.is_empty());
    }
    cfg.validate()?;
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let table = run_experiment(&cfg, workers)?;
    let formats = OutputFormats { replicates: a.replicate_csv, plot: cfg.plot };
    for f in emit_outputs(&table, &cli.out_dir, formats)? {
        println!("{}", f.display());
    }
    Ok(())
}

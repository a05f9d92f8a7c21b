//! Reproducible Monte Carlo runner for HFSM estimation experiments.
//!
//! Replicate `r` draws its path from a generator seeded with
//! `SHA-256("hsas/replicate" ‖ master_seed ‖ r)`, so results do not depend on
//! the number of workers or on completion order. The same path is shared by
//! every cell with the same `(α, H, n)`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use hsas_core::inference::{estimate_hfsm, regression_from_frequencies, RegressionPolicy};
use hsas_core::mollify::{discretize_kernel, mollify_path, rho_hfsm, DiscreteKernel, MollifierSpec};
use hsas_core::pathgen::{simulate_hfsm, PathSample, SpectralGrid, TimeGrid};
use hsas_core::spectral::{extract_peaks, kde, periodogram, uniform_grid, DensityEstimate, Periodogram};
use hsas_core::stable::StabilityIndex;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Kernel, Metric};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_json, write_rows};

/// 32-byte generator seed of replicate `r`.
pub fn child_seed(master_seed: u64, replicate: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"hsas/replicate");
    h.update(master_seed.to_le_bytes());
    h.update(replicate.to_le_bytes());
    h.finalize().into()
}

/// First eight bytes of [`child_seed`], for reporting.
pub fn child_seed_id(master_seed: u64, replicate: u64) -> u64 {
    let s = child_seed(master_seed, replicate);
    u64::from_le_bytes(s[..8].try_into().expect("eight bytes"))
}

/// Squared L² distance `∫_a^b (ρ̂ - ρ)²` by the trapezoid rule on the
/// estimate's grid; interior grid points are used as they are and the
/// endpoints are added by linear interpolation.
pub fn l2_distance(est: &DensityEstimate, truth: impl Fn(f64) -> f64, interval: [f64; 2]) -> Result<f64> {
    let [a, b] = interval;
    let g = &est.grid;
    if g.is_empty() || !(a < b) || g[0] > a || g[g.len() - 1] < b {
        return Err(Error::Config(format!(
            "density grid [{}, {}] does not cover the interval [{a}, {b}]",
            g.first().copied().unwrap_or(f64::NAN),
            g.last().copied().unwrap_or(f64::NAN)
        )));
    }
    let mut pts = vec![(a, est.interpolate(a))];
    pts.extend(g.iter().zip(&est.values).filter(|(z, _)| **z > a && **z < b).map(|(z, v)| (*z, *v)));
    pts.push((b, est.interpolate(b)));
    let sq: Vec<(f64, f64)> = pts.iter().map(|&(z, v)| (z, (v - truth(z)).powi(2))).collect();
    Ok(sq.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum())
}

/// Coordinates of a table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellKey {
    pub kernel: Kernel,
    pub alpha: f64,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_peaks: usize,
}

impl CellKey {
    pub fn label(&self) -> String {
        format!("{}_a{}_h{}_n{}_N{}", self.kernel.label(), self.alpha, self.hurst, self.n, self.n_peaks)
    }
}

/// Outcome of one metric on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Outcome<T> {
    Ok(T),
    Failed(String),
}

impl<T> Outcome<T> {
    fn from_result<E: std::fmt::Display>(r: std::result::Result<T, E>) -> Self {
        match r {
            Ok(v) => Self::Ok(v),
            Err(e) => Self::Failed(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormValue {
    pub alpha_tilde: f64,
    pub h_tilde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionValue {
    pub alpha_hat: f64,
    pub outlier: bool,
}

/// `z,rho_true,rho_hat,theta` overlay rows.
pub type PlotRows = Vec<[f64; 4]>;

/// Per-replicate metrics of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub replicate: usize,
    pub seed: u64,
    pub closed_form: Option<Outcome<ClosedFormValue>>,
    pub regression: Option<Outcome<RegressionValue>>,
    pub sq_l2: Option<Outcome<f64>>,
    #[serde(skip)]
    pub plot: Option<PlotRows>,
}

/// Location and spread of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// `sd / √R_effective`.
    pub mc_se: f64,
    pub median: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, mc_se: f64::NAN, median: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { f64::NAN };
        let mut s = values.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        Self { mean, mc_se: (var / n as f64).sqrt(), median }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormStats {
    pub bias_alpha: Summary,
    pub bias_h: Summary,
    pub r_effective: usize,
    pub failures: usize,
    /// Replicates with `α̃ ∉ (0, 2)` or `H̃ ∉ (0, 1)`; included in the means.
    pub flagged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionStats {
    pub bias_alpha: Summary,
    pub r_effective: usize,
    /// Replicates with `α̂ ∉ (0, 2)`, excluded from the summary.
    pub outliers: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Stats {
    pub sq_l2: Summary,
    pub r_effective: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub key: CellKey,
    pub replicates: usize,
    pub closed_form: Option<ClosedFormStats>,
    pub regression: Option<RegressionStats>,
    pub l2: Option<L2Stats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub cells: Vec<CellStats>,
    /// Per-replicate records ordered by cell, then replicate.
    pub records: Vec<ReplicateRecord>,
}

/// SHA-256 of the canonical JSON form of the configuration.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("configuration serializes").as_bytes())
}

/// Cells in table order: kernel, α, H, n, N.
pub fn cells(cfg: &ExperimentConfig) -> Vec<CellKey> {
    let mut out = Vec::new();
    for &kernel in &cfg.kernels {
        for &alpha in &cfg.alphas {
            for &hurst in &cfg.hursts {
                for d in &cfg.designs {
                    for &n_peaks in &d.peaks {
                        out.push(CellKey { kernel, alpha, hurst, n: d.n, n_peaks });
                    }
                }
            }
        }
    }
    out
}

/// One simulated path: `(α, H, design)` and a replicate.
#[derive(Debug, Clone, Copy)]
struct Unit {
    alpha: f64,
    hurst: f64,
    design: usize,
    replicate: usize,
}

struct Prepared {
    grid: SpectralGrid,
    kernels: BTreeMap<(Kernel, usize), (MollifierSpec, DiscreteKernel)>,
    kde_grid: Vec<f64>,
    policy: RegressionPolicy,
    cells: Vec<CellKey>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut kernels = BTreeMap::new();
    for &k in &cfg.kernels {
        for (i, &theta) in cfg.thetas.iter().enumerate() {
            let spec = k.spec(theta, cfg.l, cfg.delta)?;
            kernels.insert((k, i), (spec, discretize_kernel(&spec)?));
        }
    }
    let policy = RegressionPolicy {
        b_l: cfg.b_l,
        eps: cfg.eps,
        jump_factor: cfg.jump_factor,
        l_points: cfg.l_points,
        exclusion_bins: cfg.exclusion_bins,
        kde_points: cfg.kde_points,
        grid_max: Some(cfg.kde_grid_max()),
        bandwidth: cfg.bandwidth,
    };
    Ok(Prepared {
        grid: cfg.spectral_grid()?,
        kernels,
        kde_grid: uniform_grid(cfg.kde_grid_max(), cfg.kde_points),
        policy,
        cells: cells(cfg),
    })
}

fn plot_rows(d: &DensityEstimate, spec: &MollifierSpec, alpha: f64, hurst: f64) -> PlotRows {
    match rho_hfsm(alpha, hurst, spec.p, spec.q, spec.theta) {
        Ok(rho) => d.grid.iter().zip(&d.values).map(|(&z, &v)| [z, rho.eval(z), v, spec.theta]).collect(),
        Err(_) => Vec::new(),
    }
}

fn run_unit(cfg: &ExperimentConfig, prep: &Prepared, unit: Unit) -> Vec<ReplicateRecord> {
    let design = &cfg.designs[unit.design];
    let seed_id = child_seed_id(cfg.master_seed, unit.replicate as u64);
    let my_cells: Vec<usize> = (0..prep.cells.len())
        .filter(|&c| {
            let k = &prep.cells[c];
            k.alpha == unit.alpha && k.hurst == unit.hurst && k.n == design.n
        })
        .collect();
    let want = |m: Metric| cfg.metrics.contains(&m);
    let blank = |cell: usize| ReplicateRecord {
        cell,
        replicate: unit.replicate,
        seed: seed_id,
        closed_form: None,
        regression: None,
        sq_l2: None,
        plot: None,
    };
    let fail_all = |msg: String| -> Vec<ReplicateRecord> {
        my_cells
            .iter()
            .map(|&c| ReplicateRecord {
                closed_form: want(Metric::ClosedForm).then(|| Outcome::Failed(msg.clone())),
                regression: want(Metric::Regression).then(|| Outcome::Failed(msg.clone())),
                sq_l2: want(Metric::L2).then(|| Outcome::Failed(msg.clone())),
                ..blank(c)
            })
            .collect()
    };

    let path = match simulate(cfg, prep, unit, design.n) {
        Ok(p) => p,
        Err(e) => return fail_all(format!("simulation: {e}")),
    };
    let mut pgs: BTreeMap<(Kernel, usize), hsas_core::Result<Periodogram>> = BTreeMap::new();
    let mut out = Vec::with_capacity(my_cells.len());
    for c in my_cells {
        let key = prep.cells[c];
        let mut rec = blank(c);
        let mut pg = |i: usize| {
            pgs.entry((key.kernel, i))
                .or_insert_with(|| mollify_path(&path, &prep.kernels[&(key.kernel, i)].1).and_then(|m| periodogram(&m)))
                .clone()
        };
        let spec1 = prep.kernels[&(key.kernel, 0)].0;
        let f1 = pg(0).and_then(|p| extract_peaks(&p, key.n_peaks, cfg.exclusion_bins));
        let want_plot = cfg.plot && unit.replicate == 0;
        let mut plot = Vec::new();
        if want(Metric::ClosedForm) {
            let r = f1.clone().and_then(|f| estimate_hfsm(&f, &spec1));
            rec.closed_form = Some(Outcome::from_result(
                r.map(|r| ClosedFormValue { alpha_tilde: r.alpha_hat, h_tilde: r.h_hat.unwrap_or(f64::NAN) }),
            ));
        }
        if want(Metric::L2) {
            let d = f1.clone().and_then(|f| kde(&f, &prep.kde_grid, cfg.bandwidth));
            let l2 = d.map_err(Error::from).and_then(|d| {
                let rho = rho_hfsm(key.alpha, key.hurst, spec1.p, spec1.q, spec1.theta)?;
                if want_plot {
                    plot.extend(plot_rows(&d, &spec1, key.alpha, key.hurst));
                }
                l2_distance(&d, |z| rho.eval(z), cfg.l2_interval)
            });
            rec.sq_l2 = Some(Outcome::from_result(l2));
        }
        if want(Metric::Regression) {
            let spec2 = prep.kernels[&(key.kernel, 1)].0;
            let f2 = pg(1).and_then(|p| extract_peaks(&p, key.n_peaks, cfg.exclusion_bins));
            let run = f1.and_then(|f1| f2.and_then(|f2| regression_from_frequencies(f1, f2, &spec1, &spec2, &prep.policy)));
            if want_plot {
                if let Ok(run) = &run {
                    if !want(Metric::L2) {
                        plot.extend(plot_rows(&run.densities[0], &spec1, key.alpha, key.hurst));
                    }
                    plot.extend(plot_rows(&run.densities[1], &spec2, key.alpha, key.hurst));
                }
            }
            rec.regression = Some(Outcome::from_result(
                run.map(|r| RegressionValue { alpha_hat: r.report.alpha_hat, outlier: r.report.outlier }),
            ));
        }
        if want_plot {
            rec.plot = Some(plot);
        }
        out.push(rec);
    }
    out
}

fn simulate(cfg: &ExperimentConfig, prep: &Prepared, unit: Unit, n: usize) -> Result<PathSample> {
    let mut rng = ChaCha8Rng::from_seed(child_seed(cfg.master_seed, unit.replicate as u64));
    let times = TimeGrid::from_mesh(cfg.delta, n)?;
    let mut p = simulate_hfsm(StabilityIndex::new(unit.alpha)?, unit.hurst, &prep.grid, &times, &mut rng)?;
    p.meta.seed = Some(child_seed_id(cfg.master_seed, unit.replicate as u64));
    Ok(p)
}

fn summarize(key: CellKey, cfg: &ExperimentConfig, recs: &[&ReplicateRecord]) -> CellStats {
    let r = recs.len();
    let closed_form = cfg.metrics.contains(&Metric::ClosedForm).then(|| {
        let ok: Vec<ClosedFormValue> = recs
            .iter()
            .filter_map(|x| match &x.closed_form {
                Some(Outcome::Ok(v)) => Some(*v),
                _ => None,
            })
            .collect();
        let flagged = ok
            .iter()
            .filter(|v| !(v.alpha_tilde > 0.0 && v.alpha_tilde < 2.0) || !(v.h_tilde > 0.0 && v.h_tilde < 1.0))
            .count();
        ClosedFormStats {
            bias_alpha: Summary::of(&ok.iter().map(|v| v.alpha_tilde - key.alpha).collect::<Vec<_>>()),
            bias_h: Summary::of(&ok.iter().map(|v| v.h_tilde - key.hurst).collect::<Vec<_>>()),
            r_effective: ok.len(),
            failures: r - ok.len(),
            flagged,
        }
    });
    let regression = cfg.metrics.contains(&Metric::Regression).then(|| {
        let ok: Vec<RegressionValue> = recs
            .iter()
            .filter_map(|x| match &x.regression {
                Some(Outcome::Ok(v)) => Some(*v),
                _ => None,
            })
            .collect();
        let kept: Vec<f64> = ok.iter().filter(|v| !v.outlier).map(|v| v.alpha_hat - key.alpha).collect();
        RegressionStats {
            bias_alpha: Summary::of(&kept),
            r_effective: kept.len(),
            outliers: ok.len() - kept.len(),
            failures: r - ok.len(),
        }
    });
    let l2 = cfg.metrics.contains(&Metric::L2).then(|| {
        let ok: Vec<f64> = recs
            .iter()
            .filter_map(|x| match &x.sq_l2 {
                Some(Outcome::Ok(v)) => Some(*v),
                _ => None,
            })
            .collect();
        L2Stats { sq_l2: Summary::of(&ok), r_effective: ok.len(), failures: r - ok.len() }
    });
    CellStats { key, replicates: r, closed_form, regression, l2 }
}

/// Run all replicates of all cells on `workers` threads.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ResultTable> {
    let prep = prepare(cfg)?;
    let mut units = Vec::new();
    for &alpha in &cfg.alphas {
        for &hurst in &cfg.hursts {
            for design in 0..cfg.designs.len() {
                for replicate in 0..cfg.replicates {
                    units.push(Unit { alpha, hurst, design, replicate });
                }
            }
        }
    }
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, units.len().max(1));
    let mut slots: Vec<Option<Vec<ReplicateRecord>>> = vec![None; units.len()];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= units.len() {
                            break done;
                        }
                        done.push((i, run_unit(cfg, &prep, units[i])));
                    }
                })
            })
            .collect();
        for h in handles {
            for (i, recs) in h.join().expect("worker panicked") {
                slots[i] = Some(recs);
            }
        }
    });
    // deterministic fold in cell, then replicate order
    let mut records: Vec<ReplicateRecord> = slots.into_iter().flat_map(|s| s.expect("every unit ran")).collect();
    records.sort_by_key(|r| (r.cell, r.replicate));
    let cells: Vec<CellStats> = prep
        .cells
        .iter()
        .enumerate()
        .map(|(c, key)| {
            let recs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.cell == c).collect();
            summarize(*key, cfg, &recs)
        })
        .collect();
    Ok(ResultTable { config: cfg.clone(), config_digest: config_digest(cfg), cells, records })
}

/// Which optional files [`emit_outputs`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutputFormats {
    pub replicates: bool,
    pub plot: bool,
}

fn num(x: f64) -> String {
    x.to_string()
}

pub const CLOSED_FORM_COLUMNS: [&str; 9] =
    ["alpha", "H", "N", "kernel", "mean_bias_alpha", "mean_bias_H", "mc_se_alpha", "mc_se_H", "R_effective"];
pub const REGRESSION_COLUMNS: [&str; 11] = [
    "alpha",
    "H",
    "n",
    "N",
    "kernel",
    "mean_bias_alpha",
    "mc_se_alpha",
    "median_bias_alpha",
    "outliers",
    "failures",
    "R_effective",
];
pub const L2_COLUMNS: [&str; 10] =
    ["alpha", "H", "n", "N", "kernel", "mean_sq_l2", "mc_se_sq_l2", "median_sq_l2", "failures", "R_effective"];
pub const REPLICATE_COLUMNS: [&str; 13] = [
    "alpha",
    "H",
    "n",
    "N",
    "kernel",
    "replicate",
    "seed",
    "alpha_tilde",
    "H_tilde",
    "alpha_hat",
    "outlier",
    "sq_l2",
    "error",
];

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ExperimentConfig,
    config_digest: &'a str,
    master_seed: u64,
    seed_derivation: &'static str,
    versions: BTreeMap<&'static str, &'static str>,
    files: BTreeMap<String, String>,
    results_digest: String,
    created_unix: u64,
}

/// Write the result tables, optional per-replicate and plot files, and
/// `metadata.json`; returns the written paths. Every CSV starts with a
/// `# config_digest:` comment. The metadata timestamp is the only field
/// that changes between identical runs and enters no digest.
pub fn emit_outputs(table: &ResultTable, out_dir: &Path, formats: OutputFormats) -> Result<Vec<PathBuf>> {
    let cfg = &table.config;
    let tag = [("config_digest", table.config_digest.as_str())];
    let mut written: Vec<PathBuf> = Vec::new();
    let mut write = |name: String, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let p = out_dir.join(name);
        write_rows(&p, &tag, header, rows)?;
        written.push(p);
        Ok(())
    };

    if cfg.metrics.contains(&Metric::ClosedForm) {
        let ns: Vec<usize> = cfg.designs.iter().map(|d| d.n).collect();
        for &n in &ns {
            let rows = table
                .cells
                .iter()
                .filter(|c| c.key.n == n)
                .filter_map(|c| c.closed_form.map(|s| (c.key, s)))
                .map(|(k, s)| {
                    vec![
                        num(k.alpha),
                        num(k.hurst),
                        k.n_peaks.to_string(),
                        k.kernel.label().into(),
                        num(s.bias_alpha.mean),
                        num(s.bias_h.mean),
                        num(s.bias_alpha.mc_se),
                        num(s.bias_h.mc_se),
                        s.r_effective.to_string(),
                    ]
                })
                .collect();
            let name = if ns.len() == 1 { "closed_form.csv".to_string() } else { format!("closed_form_n{n}.csv") };
            write(name, &CLOSED_FORM_COLUMNS, rows)?;
        }
    }
    if cfg.metrics.contains(&Metric::Regression) {
        let rows = table
            .cells
            .iter()
            .filter_map(|c| c.regression.map(|s| (c.key, s)))
            .map(|(k, s)| {
                vec![
                    num(k.alpha),
                    num(k.hurst),
                    k.n.to_string(),
                    k.n_peaks.to_string(),
                    k.kernel.label().into(),
                    num(s.bias_alpha.mean),
                    num(s.bias_alpha.mc_se),
                    num(s.bias_alpha.median),
                    s.outliers.to_string(),
                    s.failures.to_string(),
                    s.r_effective.to_string(),
                ]
            })
            .collect();
        write("regression.csv".into(), &REGRESSION_COLUMNS, rows)?;
    }
    if cfg.metrics.contains(&Metric::L2) {
        let rows = table
            .cells
            .iter()
            .filter_map(|c| c.l2.map(|s| (c.key, s)))
            .map(|(k, s)| {
                vec![
                    num(k.alpha),
                    num(k.hurst),
                    k.n.to_string(),
                    k.n_peaks.to_string(),
                    k.kernel.label().into(),
                    num(s.sq_l2.mean),
                    num(s.sq_l2.mc_se),
                    num(s.sq_l2.median),
                    s.failures.to_string(),
                    s.r_effective.to_string(),
                ]
            })
            .collect();
        write("l2.csv".into(), &L2_COLUMNS, rows)?;
    }
    if formats.replicates {
        let rows = table
            .records
            .iter()
            .map(|r| {
                let k = table.cells[r.cell].key;
                let mut errors = Vec::new();
                let (at, ht) = match &r.closed_form {
                    Some(Outcome::Ok(v)) => (num(v.alpha_tilde), num(v.h_tilde)),
                    Some(Outcome::Failed(e)) => {
                        errors.push(format!("closed-form: {e}"));
                        (String::new(), String::new())
                    }
                    None => (String::new(), String::new()),
                };
                let (ah, out) = match &r.regression {
                    Some(Outcome::Ok(v)) => (num(v.alpha_hat), v.outlier.to_string()),
                    Some(Outcome::Failed(e)) => {
                        errors.push(format!("regression: {e}"));
                        (String::new(), String::new())
                    }
                    None => (String::new(), String::new()),
                };
                let l2 = match &r.sq_l2 {
                    Some(Outcome::Ok(v)) => num(*v),
                    Some(Outcome::Failed(e)) => {
                        errors.push(format!("l2: {e}"));
                        String::new()
                    }
                    None => String::new(),
                };
                vec![
                    num(k.alpha),
                    num(k.hurst),
                    k.n.to_string(),
                    k.n_peaks.to_string(),
                    k.kernel.label().into(),
                    r.replicate.to_string(),
                    r.seed.to_string(),
                    at,
                    ht,
                    ah,
                    out,
                    l2,
                    errors.join("; "),
                ]
            })
            .collect();
        write("replicates.csv".into(), &REPLICATE_COLUMNS, rows)?;
    }
    if formats.plot {
        for r in table.records.iter().filter(|r| r.plot.is_some()) {
            let rows = r.plot.as_ref().expect("filtered").iter().map(|row| row.iter().map(|v| num(*v)).collect()).collect();
            write(format!("plot/{}.csv", table.cells[r.cell].key.label()), &["z", "rho_true", "rho_hat", "theta"], rows)?;
        }
    }

    let mut files = BTreeMap::new();
    let mut all = Sha256::new();
    for p in &written {
        let bytes = std::fs::read(p).map_err(crate::error::io_err(p))?;
        let rel = p.strip_prefix(out_dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
        all.update(rel.as_bytes());
        all.update(&bytes);
        files.insert(rel, sha256_hex(&bytes));
    }
    let results_digest: String = all.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let meta = Metadata {
        config: cfg,
        config_digest: &table.config_digest,
        master_seed: cfg.master_seed,
        seed_derivation: "ChaCha8 seeded with SHA-256(\"hsas/replicate\" || master_seed_le || replicate_le)",
        versions: BTreeMap::from([("hsas", env!("CARGO_PKG_VERSION"))]),
        files,
        results_digest,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let meta_path = out_dir.join("metadata.json");
    write_json(&meta_path, &meta)?;
    written.push(meta_path);
    Ok(written)
}

//! Flat-file formats: path CSV (`t,x`) with a JSON sidecar, kernel CSV
//! (`l,t,v`), periodogram CSV (`freq,ordinate`), KDE CSV (`z,rho_hat`) and
//! estimation reports as JSON.

use std::fs;
use std::path::{Path, PathBuf};

use hsas_core::inference::EstimationReport;
use hsas_core::mollify::DiscreteKernel;
use hsas_core::pathgen::{Generator, PathMeta, PathSample, Spacing};
use hsas_core::spectral::{DensityEstimate, Periodogram};
use serde::{Deserialize, Serialize};

use crate::error::{csv_err, io_err, json_err, Error, Result};

/// Serializable mirror of [`Generator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorRecord {
    Provided,
    StatIncr { psi: String, alpha: f64, grid: GridRecord },
    Hfsm { alpha: f64, hurst: f64, grid: GridRecord },
    Lepage { alpha: f64, terms: usize, total_mass: f64 },
    Mollified { source: Box<GeneratorRecord>, p: f64, q: f64, theta: f64, l: usize },
    Scaled { source: Box<GeneratorRecord>, factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub x_max: f64,
    pub x_min: f64,
    pub m_cells: usize,
    pub log_spacing: bool,
}

impl From<&Generator> for GeneratorRecord {
    fn from(g: &Generator) -> Self {
        let grid = |g: &hsas_core::pathgen::SpectralGrid| GridRecord {
            x_max: g.x_max,
            x_min: g.x_min,
            m_cells: g.m_cells,
            log_spacing: g.spacing == Spacing::SymmetricLog,
        };
        match g {
            Generator::Provided => Self::Provided,
            Generator::StatIncr { psi, alpha, grid: gr } => Self::StatIncr { psi: psi.clone(), alpha: *alpha, grid: grid(gr) },
            Generator::Hfsm { alpha, h, grid: gr } => Self::Hfsm { alpha: *alpha, hurst: *h, grid: grid(gr) },
            Generator::LePage { alpha, k, total_mass } => Self::Lepage { alpha: *alpha, terms: *k, total_mass: *total_mass },
            Generator::Mollified { source, p, q, theta, l } => {
                Self::Mollified { source: Box::new(source.as_ref().into()), p: *p, q: *q, theta: *theta, l: *l }
            }
            Generator::Scaled { source, factor } => Self::Scaled { source: Box::new(source.as_ref().into()), factor: *factor },
        }
    }
}

impl GeneratorRecord {
    fn to_generator(&self) -> Result<Generator> {
        let grid = |g: &GridRecord| {
            let spacing = if g.log_spacing { Spacing::SymmetricLog } else { Spacing::Linear };
            hsas_core::pathgen::SpectralGrid::new(g.x_max, g.x_min, g.m_cells, spacing)
        };
        Ok(match self {
            Self::Provided => Generator::Provided,
            Self::StatIncr { psi, alpha, grid: g } => Generator::StatIncr { psi: psi.clone(), alpha: *alpha, grid: grid(g)? },
            Self::Hfsm { alpha, hurst, grid: g } => Generator::Hfsm { alpha: *alpha, h: *hurst, grid: grid(g)? },
            Self::Lepage { alpha, terms, total_mass } => Generator::LePage { alpha: *alpha, k: *terms, total_mass: *total_mass },
            Self::Mollified { source, p, q, theta, l } => {
                Generator::Mollified { source: Box::new(source.to_generator()?), p: *p, q: *q, theta: *theta, l: *l }
            }
            Self::Scaled { source, factor } => Generator::Scaled { source: Box::new(source.to_generator()?), factor: *factor },
        })
    }
}

/// Metadata written next to a path CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSidecar {
    pub t0: f64,
    pub delta: f64,
    pub n: usize,
    pub generator: GeneratorRecord,
    pub seed: Option<u64>,
}

/// `foo.csv` → `foo.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

/// Write rows of full-precision numbers under `header`, optionally preceded
/// by `# key: value` comment lines.
pub fn write_rows<I, R>(path: &Path, comments: &[(&str, &str)], header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    create_parent(path)?;
    let mut text = String::new();
    for (k, v) in comments {
        text.push_str(&format!("# {k}: {v}\n"));
    }
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format { path: path.into(), message: e.to_string() })?;
    text.push_str(&String::from_utf8_lossy(&bytes));
    fs::write(path, text).map_err(io_err(path))
}

/// Read a numeric CSV with a header, skipping `#` comment lines; returns the
/// header and the rows.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Format {
                    path: path.into(),
                    message: format!("row {}: `{s}`: {e}", i + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<()> {
    if header.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(Error::Format { path: path.into(), message: format!("expected columns {expected:?}, found {header:?}") });
    }
    Ok(())
}

/// Write `t,x` rows and the JSON sidecar.
pub fn write_path(path: &Path, sample: &PathSample) -> Result<()> {
    write_rows(
        path,
        &[],
        &["t", "x"],
        sample.values.iter().enumerate().map(|(j, x)| [sample.time(j).to_string(), x.to_string()]),
    )?;
    let sidecar = PathSidecar {
        t0: sample.t0,
        delta: sample.delta,
        n: sample.len(),
        generator: (&sample.meta.generator).into(),
        seed: sample.meta.seed,
    };
    write_json(&sidecar_path(path), &sidecar)
}

/// Read a path CSV. Mesh and origin come from the sidecar when present,
/// otherwise from the `t` column, which must then be equidistant.
pub fn read_path(path: &Path) -> Result<PathSample> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &["t", "x"])?;
    let values: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let side = sidecar_path(path);
    if side.exists() {
        let meta: PathSidecar = read_json(&side)?;
        if meta.n != values.len() {
            return Err(Error::Format {
                path: path.into(),
                message: format!("sidecar announces {} samples, file has {}", meta.n, values.len()),
            });
        }
        let generator = meta.generator.to_generator()?;
        return Ok(PathSample::new(meta.t0, meta.delta, values, PathMeta { generator, seed: meta.seed })?);
    }
    if rows.len() < 2 {
        return Err(Error::Format { path: path.into(), message: "need at least two samples to infer the mesh".into() });
    }
    let t0 = rows[0][0];
    let delta = (rows[rows.len() - 1][0] - t0) / (rows.len() - 1) as f64;
    for (j, r) in rows.iter().enumerate() {
        if (r[0] - (t0 + j as f64 * delta)).abs() > 1e-9 * delta.abs().max(r[0].abs()) {
            return Err(Error::Format { path: path.into(), message: format!("row {}: times are not equidistant", j + 1) });
        }
    }
    Ok(PathSample::new(t0, delta, values, PathMeta::provided())?)
}

/// Write `l,t,v` rows of a discretized kernel.
pub fn write_kernel(path: &Path, kernel: &DiscreteKernel) -> Result<()> {
    let l = kernel.values.len() - 1;
    let d = kernel.delta();
    write_rows(
        path,
        &[],
        &["l", "t", "v"],
        kernel
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| [i.to_string(), (d * (i as f64 - 0.5 * l as f64)).to_string(), v.to_string()]),
    )
}

/// Write `freq,ordinate` rows for the Fourier frequencies `j = 1..n/2`.
pub fn write_periodogram(path: &Path, pg: &Periodogram) -> Result<()> {
    write_rows(
        path,
        &[],
        &["freq", "ordinate"],
        pg.ordinates.iter().enumerate().map(|(i, o)| [pg.frequency((i + 1) as f64).to_string(), o.to_string()]),
    )
}

/// Write `z,rho_hat` rows.
pub fn write_kde(path: &Path, d: &DensityEstimate) -> Result<()> {
    write_rows(path, &[], &["z", "rho_hat"], d.grid.iter().zip(&d.values).map(|(z, v)| [z.to_string(), v.to_string()]))
}

/// JSON form of an [`EstimationReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub alpha_hat: f64,
    #[serde(rename = "H_hat")]
    pub h_hat: Option<f64>,
    pub intercept: Option<f64>,
    pub interval: Option<[f64; 2]>,
    pub eigen_min: Option<f64>,
    pub eigen_max: Option<f64>,
    pub gamma_shape: Option<f64>,
    pub gamma_rate: Option<f64>,
    pub outlier: bool,
    pub h_out_of_range: bool,
    pub n_used: usize,
    pub seed: Option<u64>,
    pub config_digest: String,
}

impl ReportRecord {
    pub fn new(r: &EstimationReport, config_digest: String) -> Self {
        Self {
            alpha_hat: r.alpha_hat,
            h_hat: r.h_hat,
            intercept: r.intercept,
            interval: r.interval.map(|(a, b)| [a, b]),
            eigen_min: r.eigen_min,
            eigen_max: r.eigen_max,
            gamma_shape: r.gamma_fit.map(|g| g.shape),
            gamma_rate: r.gamma_fit.map(|g| g.rate),
            outlier: r.outlier,
            h_out_of_range: r.h_out_of_range,
            n_used: r.n_used,
            seed: r.seed,
            config_digest,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

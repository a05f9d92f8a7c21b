//! Experiment configuration (TOML) and the table presets.

use std::path::Path;

use hsas_core::mollify::MollifierSpec;
use hsas_core::pathgen::SpectralGrid;
use hsas_core::spectral::{DEFAULT_EXCLUSION_BINS, DEFAULT_KDE_POINTS};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `w(x) = x² e^{-x²}`.
    V1,
    /// `w(x) = x⁴ e^{-x²}`.
    V2,
}

impl Kernel {
    pub fn spec(self, theta: f64, l: usize, delta: f64) -> hsas_core::Result<MollifierSpec> {
        match self {
            Kernel::V1 => MollifierSpec::v1(theta, l, delta),
            Kernel::V2 => MollifierSpec::v2(theta, l, delta),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Kernel::V1 => "v1",
            Kernel::V2 => "v2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Squared L² distance between `ρ̂_θ` and `ρ_θ` (first θ).
    L2,
    /// Log-ratio regression estimate `α̂` (needs two θ).
    Regression,
    /// Gamma closed-form estimates `α̃`, `H̃` (first θ).
    ClosedForm,
}

/// One sample size with the peak counts evaluated on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub n: usize,
    pub peaks: Vec<usize>,
}

/// Simulation grid override; defaults follow the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_max: f64,
    pub x_min: f64,
    pub m_cells: usize,
}

fn default_l() -> usize {
    100
}
fn default_delta() -> f64 {
    0.01
}
fn default_exclusion() -> usize {
    DEFAULT_EXCLUSION_BINS
}
fn default_kde_points() -> usize {
    DEFAULT_KDE_POINTS
}
fn default_b_l() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    0.05
}
fn default_jump() -> f64 {
    3.0
}
fn default_l_points() -> usize {
    100
}
fn default_interval() -> [f64; 2] {
    [0.0, 100.0]
}

/// A Monte Carlo experiment over the cells
/// `kernels × alphas × hursts × designs × peaks` for HFSM paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub metrics: Vec<Metric>,
    pub alphas: Vec<f64>,
    pub hursts: Vec<f64>,
    pub kernels: Vec<Kernel>,
    /// One θ, or two (`θ1`, `θ2`) for the regression metric.
    pub thetas: Vec<f64>,
    pub designs: Vec<Design>,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_l")]
    pub l: usize,
    #[serde(default = "default_exclusion")]
    pub exclusion_bins: usize,
    #[serde(default = "default_kde_points")]
    pub kde_points: usize,
    /// Upper end of the KDE grid; defaults to `5 max θ`.
    #[serde(default)]
    pub grid_max: Option<f64>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default = "default_b_l")]
    pub b_l: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_jump")]
    pub jump_factor: f64,
    #[serde(default = "default_l_points")]
    pub l_points: usize,
    /// Interval of the L² metric.
    #[serde(default = "default_interval")]
    pub l2_interval: [f64; 2],
    #[serde(default)]
    pub grid: Option<GridConfig>,
    /// Emit `z,rho_true,rho_hat,theta` overlays for the first replicate of
    /// each cell.
    #[serde(default)]
    pub plot: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Load from TOML, or from the `config` field of a metadata record
    /// (`.json`) written by a previous run.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Record {
                config: ExperimentConfig,
            }
            serde_json::from_str::<Record>(&text)
                .map_err(|source| Error::Json { path: path.into(), source })?
                .config
        } else {
            Self::from_toml_str(&text).map_err(|source| Error::Toml { path: path.into(), source })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn spectral_grid(&self) -> Result<SpectralGrid> {
        Ok(match self.grid {
            Some(g) => SpectralGrid::new(g.x_max, g.x_min, g.m_cells, hsas_core::pathgen::Spacing::Linear)?,
            None => SpectralGrid::default_for_mesh(self.delta)?,
        })
    }

    pub fn kde_grid_max(&self) -> f64 {
        self.grid_max.unwrap_or_else(|| 5.0 * self.thetas.iter().copied().fold(0.0, f64::max))
    }

    /// Check that every component precondition can be met.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.metrics.is_empty() {
            return bad("no metric requested".into());
        }
        for list in [&self.alphas, &self.hursts, &self.thetas] {
            if list.is_empty() {
                return bad("alphas, hursts and thetas must be non-empty".into());
            }
        }
        if self.kernels.is_empty() || self.designs.is_empty() {
            return bad("kernels and designs must be non-empty".into());
        }
        if let Some(&a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a < 2.0)) {
            return bad(format!("alpha = {a} outside (0, 2)"));
        }
        if let Some(&h) = self.hursts.iter().find(|&&h| !(h > 0.0 && h < 1.0)) {
            return bad(format!("H = {h} outside (0, 1)"));
        }
        if self.thetas.len() > 2 {
            return bad("at most two thetas".into());
        }
        if self.metrics.contains(&Metric::Regression) && (self.thetas.len() != 2 || self.thetas[0] == self.thetas[1]) {
            return bad("the regression metric needs two distinct thetas".into());
        }
        if !(self.l2_interval[0] >= 0.0 && self.l2_interval[1] > self.l2_interval[0]) {
            return bad(format!("invalid L2 interval {:?}", self.l2_interval));
        }
        if self.metrics.contains(&Metric::L2) && self.kde_grid_max() < self.l2_interval[1] {
            return bad(format!("KDE grid ends at {} before the L2 interval {:?}", self.kde_grid_max(), self.l2_interval));
        }
        if self.kde_points < 2 || self.l_points < 2 {
            return bad("kde_points and l_points must be at least 2".into());
        }
        self.spectral_grid()?;
        for k in &self.kernels {
            for &t in &self.thetas {
                hsas_core::mollify::discretize_kernel(&k.spec(t, self.l, self.delta)?)?;
            }
        }
        for d in &self.designs {
            if d.n <= self.l + 16 {
                return bad(format!("n = {} leaves fewer than 16 samples after mollification with L = {}", d.n, self.l));
            }
            let bins = (d.n - self.l) / 2;
            if d.peaks.is_empty() {
                return bad(format!("design n = {} has no peak counts", d.n));
            }
            for &np in &d.peaks {
                if np < 2 || np * (2 * self.exclusion_bins + 1) > bins {
                    return bad(format!(
                        "N = {np} peaks with {} exclusion bins do not fit {bins} Fourier bins (n = {})",
                        self.exclusion_bins, d.n
                    ));
                }
            }
        }
        Ok(())
    }

    fn base(name: &str, metrics: Vec<Metric>, thetas: Vec<f64>, designs: Vec<Design>) -> Self {
        Self {
            name: name.into(),
            metrics,
            alphas: vec![0.75, 1.5],
            hursts: vec![0.25, 0.75],
            kernels: vec![Kernel::V1, Kernel::V2],
            thetas,
            designs,
            replicates: 100,
            master_seed: 1,
            delta: default_delta(),
            l: default_l(),
            exclusion_bins: default_exclusion(),
            kde_points: default_kde_points(),
            grid_max: None,
            bandwidth: None,
            b_l: default_b_l(),
            eps: default_eps(),
            jump_factor: default_jump(),
            l_points: default_l_points(),
            l2_interval: default_interval(),
            grid: None,
            plot: false,
        }
    }

    fn both_sizes() -> Vec<Design> {
        vec![Design { n: 1000, peaks: vec![10, 25, 40] }, Design { n: 10_000, peaks: vec![100, 150, 200] }]
    }

    /// Mean squared L² distances of `ρ̂_θ`, θ = 20.
    pub fn table1() -> Self {
        Self::base("table1", vec![Metric::L2], vec![20.0], Self::both_sizes())
    }

    /// Mean bias of the regression estimator, θ1 = 20, θ2 = 30.
    pub fn table2() -> Self {
        Self::base("table2", vec![Metric::Regression], vec![20.0, 30.0], Self::both_sizes())
    }

    /// Mean bias of the closed-form estimators, θ = 20, n = 10⁴.
    pub fn table3() -> Self {
        Self::base("table3", vec![Metric::ClosedForm], vec![20.0], vec![Design { n: 10_000, peaks: vec![100, 150, 200] }])
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "table1" => Some(Self::table1()),
            "table2" => Some(Self::table2()),
            "table3" => Some(Self::table3()),
            _ => None,
        }
    }

    /// Restrict a preset to a single cell.
    pub fn single_cell(mut self, kernel: Kernel, alpha: f64, hurst: f64, n: usize, peaks: usize) -> Self {
        self.kernels = vec![kernel];
        self.alphas = vec![alpha];
        self.hursts = vec![hurst];
        self.designs = vec![Design { n, peaks: vec![peaks] }];
        self
    }
}

//! Estimators: log-ratio regression for `α`, reconstruction of `Ψ^α` up to
//! a constant, closed-form Gamma fits, the HFSM estimators `(α̃, H̃)`, and
//! the asymptotic covariance of the Gamma fit.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::mollify::{discretize_kernel, mollify_path, MollifierSpec};
use crate::pathgen::PathSample;
use crate::special::trigamma;
use crate::spectral::{extract_peaks, kde, periodogram, uniform_grid, DensityEstimate, FrequencyEstimates};

/// Rows `(1, x_l)` and targets `y_l` of the regression `y = b + α x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    pub z_points: Vec<f64>,
    /// `x_l = log w_{θ1}(z_l) - log w_{θ2}(z_l)`.
    pub x: Vec<f64>,
    /// `y_l = log ρ̂_{θ1}(z_l) - log ρ̂_{θ2}(z_l)`.
    pub y: Vec<f64>,
}

impl RegressionSystem {
    pub fn from_columns(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { z_points: Vec::new(), x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Ratio interval `[b_l, b_u]` on the common grid of two density estimates.
///
/// Starting at the first grid point `≥ b_l`, the interval is extended while
/// the ratio `ρ̂₁/ρ̂₂` stays above `eps` and does not change by more than
/// `jump_factor` between neighbouring grid points.
pub fn select_ratio_interval(
    rho1: &DensityEstimate,
    rho2: &DensityEstimate,
    b_l: f64,
    eps: f64,
    jump_factor: f64,
) -> Result<(f64, f64)> {
    if rho1.grid != rho2.grid {
        return Err(Error::Configuration("density estimates must share their grid".into()));
    }
    if !(b_l >= 0.0) {
        return Err(Error::InvalidParameter { name: "b_l", value: b_l, expected: "[0, ∞)" });
    }
    let grid = &rho1.grid;
    let ratio = |i: usize| {
        let r = rho1.values[i] / rho2.values[i];
        if r.is_finite() {
            r
        } else {
            f64::NAN
        }
    };
    let start = grid.partition_point(|&z| z < b_l);
    if start >= grid.len() || !(ratio(start) > eps) {
        return Err(Error::Infeasible(format!("density ratio not above {eps} at the lower bound {b_l}")));
    }
    let mut end = start;
    while end + 1 < grid.len() {
        let (cur, next) = (ratio(end), ratio(end + 1));
        if !(next > eps) || next / cur > jump_factor || cur / next > jump_factor {
            break;
        }
        end += 1;
    }
    if end == start {
        return Err(Error::Infeasible(format!("empty ratio interval at {}", grid[start])));
    }
    Ok((grid[start], grid[end]))
}

/// Regression system on `l_points` equispaced abscissae of `interval`,
/// with densities interpolated linearly on their grid.
pub fn build_regression(
    rho1: &DensityEstimate,
    rho2: &DensityEstimate,
    spec1: &MollifierSpec,
    spec2: &MollifierSpec,
    interval: (f64, f64),
    l_points: usize,
) -> Result<RegressionSystem> {
    if spec1.p != spec2.p || spec1.q != spec2.q {
        return Err(Error::Configuration("both mollifiers must share p and q".into()));
    }
    if spec1.theta == spec2.theta {
        return Err(Error::RankDeficient("theta1 == theta2 makes the regressor constant".into()));
    }
    let (lo, hi) = interval;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Configuration(format!("invalid interval [{lo}, {hi}]")));
    }
    if l_points < 2 {
        return Err(Error::InvalidParameter { name: "L_points", value: l_points as f64, expected: ">= 2" });
    }
    let step = (hi - lo) / (l_points - 1) as f64;
    let z_points: Vec<f64> = (0..l_points).map(|l| if l + 1 == l_points { hi } else { lo + l as f64 * step }).collect();
    let x = z_points.iter().map(|&z| spec1.ln_weight(z) - spec2.ln_weight(z)).collect();
    let y = z_points
        .iter()
        .map(|&z| {
            let (a, b) = (rho1.interpolate(z), rho2.interpolate(z));
            if a > 0.0 && b > 0.0 {
                Ok(a.ln() - b.ln())
            } else {
                Err(Error::Infeasible(format!("density estimate vanishes at z = {z}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegressionSystem { z_points, x, y })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub intercept: f64,
    pub slope: f64,
    pub residuals: Vec<f64>,
}

/// Least-squares estimate `(XᵀX)^{-1} XᵀY` of `(b, α)`, computed in
/// centred form.
pub fn least_squares(sys: &RegressionSystem) -> Result<LeastSquaresFit> {
    let n = sys.len();
    if n < 2 || sys.y.len() != n {
        return Err(Error::RankDeficient(format!("{n} rows")));
    }
    let xm = sys.x.iter().sum::<f64>() / n as f64;
    let ym = sys.y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in sys.x.iter().zip(&sys.y) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    if !(sxx > 0.0) {
        return Err(Error::RankDeficient("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals = sys.x.iter().zip(&sys.y).map(|(x, y)| y - intercept - slope * x).collect();
    Ok(LeastSquaresFit { intercept, slope, residuals })
}

/// Eigenvalues `(λ_min, λ_max)` of `XᵀX = [[L, Σx], [Σx, Σx²]]`.
pub fn design_matrix_eigenvalues(sys: &RegressionSystem) -> (f64, f64) {
    let l = sys.len() as f64;
    let sx: f64 = sys.x.iter().sum();
    let sxx: f64 = sys.x.iter().map(|x| x * x).sum();
    let tr = l + sxx;
    let det = l * sxx - sx * sx;
    let disc = ((l - sxx) * (l - sxx) + 4.0 * sx * sx).sqrt();
    let max = 0.5 * (tr + disc);
    // det / λ_max avoids cancellation in ½(tr - disc)
    let min = if max > 0.0 { (det / max).max(0.0) } else { 0.0 };
    (min, max)
}

/// Tuning of the end-to-end regression estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionPolicy {
    pub b_l: f64,
    pub eps: f64,
    pub jump_factor: f64,
    pub l_points: usize,
    pub exclusion_bins: usize,
    pub kde_points: usize,
    /// Upper end of the common KDE grid; defaults to `5 max(θ1, θ2)`.
    pub grid_max: Option<f64>,
    pub bandwidth: Option<f64>,
}

impl Default for RegressionPolicy {
    fn default() -> Self {
        Self {
            b_l: 1.0,
            eps: 0.05,
            jump_factor: 3.0,
            l_points: 100,
            exclusion_bins: crate::spectral::DEFAULT_EXCLUSION_BINS,
            kde_points: crate::spectral::DEFAULT_KDE_POINTS,
            grid_max: None,
            bandwidth: None,
        }
    }
}

/// Closed-form Gamma fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub shape: f64,
    pub rate: f64,
    pub n_used: usize,
}

/// Point estimates and diagnostics of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub alpha_hat: f64,
    pub h_hat: Option<f64>,
    /// Regression intercept `b̂`.
    pub intercept: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub eigen_min: Option<f64>,
    pub eigen_max: Option<f64>,
    pub gamma_fit: Option<GammaFit>,
    /// `α̂ ∉ (0, 2)`.
    pub outlier: bool,
    /// `Ĥ ∉ (0, 1)`.
    pub h_out_of_range: bool,
    pub n_used: usize,
    pub seed: Option<u64>,
}

impl EstimationReport {
    fn new(alpha_hat: f64, h_hat: Option<f64>, n_used: usize) -> Self {
        Self {
            alpha_hat,
            h_hat,
            intercept: None,
            interval: None,
            eigen_min: None,
            eigen_max: None,
            gamma_fit: None,
            outlier: !(alpha_hat > 0.0 && alpha_hat < 2.0),
            h_out_of_range: h_hat.is_some_and(|h| !(h > 0.0 && h < 1.0)),
            n_used,
            seed: None,
        }
    }
}

/// Intermediate products of [`estimate_alpha_regression`].
#[derive(Debug, Clone)]
pub struct AlphaRegressionRun {
    pub report: EstimationReport,
    pub freqs: [FrequencyEstimates; 2],
    pub densities: [DensityEstimate; 2],
    pub system: RegressionSystem,
}

/// Mollify, take the periodogram and extract `n_peaks` frequencies.
pub fn frequencies_from_path(
    path: &PathSample,
    spec: &MollifierSpec,
    n_peaks: usize,
    exclusion_bins: usize,
) -> Result<FrequencyEstimates> {
    let kernel = discretize_kernel(spec)?;
    let mollified = mollify_path(path, &kernel)?;
    let pg = periodogram(&mollified)?;
    extract_peaks(&pg, n_peaks, exclusion_bins)
}

/// End-to-end regression estimate of `α` from one path.
pub fn estimate_alpha_regression(
    path: &PathSample,
    spec1: &MollifierSpec,
    spec2: &MollifierSpec,
    n_peaks: usize,
    policy: &RegressionPolicy,
) -> Result<EstimationReport> {
    estimate_alpha_regression_detailed(path, spec1, spec2, n_peaks, policy).map(|r| r.report)
}

/// As [`estimate_alpha_regression`], keeping the intermediate products.
pub fn estimate_alpha_regression_detailed(
    path: &PathSample,
    spec1: &MollifierSpec,
    spec2: &MollifierSpec,
    n_peaks: usize,
    policy: &RegressionPolicy,
) -> Result<AlphaRegressionRun> {
    if spec1.theta == spec2.theta {
        return Err(Error::RankDeficient("theta1 == theta2 makes the regressor constant".into()));
    }
    let f1 = frequencies_from_path(path, spec1, n_peaks, policy.exclusion_bins)?;
    let f2 = frequencies_from_path(path, spec2, n_peaks, policy.exclusion_bins)?;
    regression_from_frequencies(f1, f2, spec1, spec2, policy)
}

/// The density and regression stages of [`estimate_alpha_regression`] on
/// frequencies already extracted from the two mollifications.
pub fn regression_from_frequencies(
    f1: FrequencyEstimates,
    f2: FrequencyEstimates,
    spec1: &MollifierSpec,
    spec2: &MollifierSpec,
    policy: &RegressionPolicy,
) -> Result<AlphaRegressionRun> {
    if spec1.theta == spec2.theta {
        return Err(Error::RankDeficient("theta1 == theta2 makes the regressor constant".into()));
    }
    let n_peaks = f1.len();
    let grid_max = policy.grid_max.unwrap_or(5.0 * spec1.theta.max(spec2.theta));
    let grid = uniform_grid(grid_max, policy.kde_points);
    let d1 = kde(&f1, &grid, policy.bandwidth)?;
    let d2 = kde(&f2, &grid, policy.bandwidth)?;
    let interval = select_ratio_interval(&d1, &d2, policy.b_l, policy.eps, policy.jump_factor)?;
    let system = build_regression(&d1, &d2, spec1, spec2, interval, policy.l_points)?;
    let fit = least_squares(&system)?;
    let (emin, emax) = design_matrix_eigenvalues(&system);
    let mut report = EstimationReport::new(fit.slope, None, n_peaks);
    report.intercept = Some(fit.intercept);
    report.interval = Some(interval);
    report.eigen_min = Some(emin);
    report.eigen_max = Some(emax);
    Ok(AlphaRegressionRun { report, freqs: [f1, f2], densities: [d1, d2], system })
}

/// `ρ̂(z) w_θ(z)^{-α̂}` on the grid points where `w_θ(z) ≥ 1e-12`, an
/// estimate of `Ψ^α` up to a constant factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiReconstruction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of grid points dropped because `w_θ` underflows there.
    pub masked: usize,
}

pub const WEIGHT_FLOOR: f64 = 1e-12;

pub fn reconstruct_psi(rho_hat: &DensityEstimate, spec: &MollifierSpec, alpha_hat: f64) -> PsiReconstruction {
    let mut grid = Vec::new();
    let mut values = Vec::new();
    let mut masked = 0;
    for (&z, &r) in rho_hat.grid.iter().zip(&rho_hat.values) {
        let w = spec.weight(z);
        if w >= WEIGHT_FLOOR {
            grid.push(z);
            values.push(r * w.powf(-alpha_hat));
        } else {
            masked += 1;
        }
    }
    PsiReconstruction { grid, values, masked }
}

/// Closed-form Gamma estimators
/// `b̃ = NΣX / D`, `r̃ = N² / D` with `D = NΣX log X - Σlog X ΣX`.
pub fn gamma_closed_form(x: &[f64]) -> Result<GammaFit> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("{n} observations")));
    }
    if let Some(v) = x.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter { name: "x", value: *v, expected: "positive finite values" });
    }
    let nf = n as f64;
    let sum: f64 = x.iter().sum();
    let mean = sum / nf;
    let mean_ln = x.iter().map(|v| v.ln()).sum::<f64>() / nf;
    // D = N Σ (X - X̄)(log X - mean log X)
    let d = nf * x.iter().map(|v| (v - mean) * (v.ln() - mean_ln)).sum::<f64>();
    if !(d > 0.0) {
        return Err(Error::Degenerate("all observations equal".into()));
    }
    Ok(GammaFit { shape: nf * sum / d, rate: nf * nf / d, n_used: n })
}

/// `(b, r) = (α(p-H)/q, αθ^{-q})`.
pub fn gamma_params_hfsm(alpha: f64, h: f64, spec: &MollifierSpec) -> (f64, f64) {
    (alpha * (spec.p - h) / spec.q, alpha * spec.theta.powf(-spec.q))
}

/// Inverse of [`gamma_params_hfsm`]: `α = θ^q r`, `H = p - q b/α`.
pub fn hfsm_params_from_gamma(shape: f64, rate: f64, spec: &MollifierSpec) -> (f64, f64) {
    let alpha = spec.theta.powf(spec.q) * rate;
    (alpha, spec.p - spec.q * shape / alpha)
}

/// `(α̃, H̃)` from the Gamma fit of `|Ẑ_k|^q`.
pub fn estimate_hfsm(freqs: &FrequencyEstimates, spec: &MollifierSpec) -> Result<EstimationReport> {
    if freqs.len() < 2 {
        return Err(Error::Degenerate(format!("{} frequencies", freqs.len())));
    }
    let x: Vec<f64> = freqs.freqs.iter().map(|z| z.abs().powf(spec.q)).collect();
    let fit = gamma_closed_form(&x)?;
    let (alpha, h) = hfsm_params_from_gamma(fit.shape, fit.rate, spec);
    let mut report = EstimationReport::new(alpha, Some(h), fit.n_used);
    report.gamma_fit = Some(fit);
    Ok(report)
}

/// Asymptotic covariance of `(b̃, r̃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCovariance {
    pub var_shape: f64,
    pub var_rate: f64,
    pub cov: f64,
}

impl GammaCovariance {
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.var_shape, self.cov], [self.cov, self.var_rate]]
    }

    pub fn frobenius(&self) -> f64 {
        (self.var_shape * self.var_shape + self.var_rate * self.var_rate + 2.0 * self.cov * self.cov).sqrt()
    }
}

/// `σ_b² = b²(1 + bΨ₁(1+b))`, `σ_r² = r²(1 + bΨ₁(b))`,
/// `σ_br = -br(1 + bΨ₁(1+b))`.
pub fn asymptotic_covariance(fit: &GammaFit) -> GammaCovariance {
    let (b, r) = (fit.shape, fit.rate);
    let t1 = 1.0 + b * trigamma(1.0 + b);
    GammaCovariance { var_shape: b * b * t1, var_rate: r * r * (1.0 + b * trigamma(b)), cov: -b * r * t1 }
}

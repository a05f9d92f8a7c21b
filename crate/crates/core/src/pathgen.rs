//! Path simulation: stationary-increment harmonizable SαS processes by
//! discretizing the spectral integral, real harmonizable fractional stable
//! motions (HFSM), and stationary harmonizable SαS processes by a truncated
//! LePage series.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand::RngCore;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::dft;
use crate::error::{check_range, Error, Result};
use crate::mollify::{rho_hfsm, HfsmDensity};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::stable::{const_c_alpha, IsotropicSas, StabilityIndex};

/// How a path was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Samples supplied from outside.
    Provided,
    StatIncr { psi: String, alpha: f64, grid: SpectralGrid },
    Hfsm { alpha: f64, h: f64, grid: SpectralGrid },
    LePage { alpha: f64, k: usize, total_mass: f64 },
    Mollified { source: Box<Generator>, p: f64, q: f64, theta: f64, l: usize },
    Scaled { source: Box<Generator>, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathMeta {
    pub generator: Generator,
    pub seed: Option<u64>,
}

impl PathMeta {
    pub fn provided() -> Self {
        Self { generator: Generator::Provided, seed: None }
    }
}

/// Equidistant samples `x_j = X(t0 + jδ)`, `j = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub t0: f64,
    pub delta: f64,
    pub values: Vec<f64>,
    pub meta: PathMeta,
}

impl PathSample {
    pub fn new(t0: f64, delta: f64, values: Vec<f64>, meta: PathMeta) -> Result<Self> {
        check_range("delta", delta, delta > 0.0, "(0, ∞)")?;
        check_range("t0", t0, true, "finite")?;
        if values.len() < 2 {
            return Err(Error::InsufficientLength { len: values.len(), required: 2 });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { t0, delta, values, meta })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.delta
    }

    /// The same path multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            t0: self.t0,
            delta: self.delta,
            values: self.values.iter().map(|x| c * x).collect(),
            meta: PathMeta {
                generator: Generator::Scaled { source: Box::new(self.meta.generator.clone()), factor: c },
                seed: self.meta.seed,
            },
        }
    }
}

/// Sampling times `t_j = t0 + jδ`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub delta: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, delta: f64, n: usize) -> Result<Self> {
        check_range("delta", delta, delta > 0.0, "(0, ∞)")?;
        check_range("t0", t0, true, "finite")?;
        if n < 1 {
            return Err(Error::InsufficientLength { len: n, required: 1 });
        }
        Ok(Self { t0, delta, n })
    }

    /// `t_j = jδ`, `j = 1..=n`.
    pub fn from_mesh(delta: f64, n: usize) -> Result<Self> {
        Self::new(delta, delta, n)
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    SymmetricLog,
}

/// Symmetric cell partition of `[-x_max, -x_min] ∪ [x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGrid {
    pub x_max: f64,
    /// Radius of the excluded hole around 0 (0 for none).
    pub x_min: f64,
    /// Total number of cells on both half-lines (even).
    pub m_cells: usize,
    pub spacing: Spacing,
}

/// Number of linear cells next to the origin that are replaced by geometric
/// sub-cells when `Ψ` is singular there.
pub const INNER_LINEAR_CELLS: usize = 8;
/// Number of geometric sub-cells covering `[x_min, INNER_LINEAR_CELLS Δx]`.
pub const INNER_SUBCELLS: usize = 64;

impl SpectralGrid {
    pub fn new(x_max: f64, x_min: f64, m_cells: usize, spacing: Spacing) -> Result<Self> {
        check_range("x_max", x_max, x_max > 0.0, "(0, ∞)")?;
        check_range("x_min", x_min, x_min >= 0.0 && x_min < x_max, "[0, x_max)")?;
        if m_cells < 2 || !m_cells.is_multiple_of(2) {
            return Err(Error::InvalidParameter { name: "m_cells", value: m_cells as f64, expected: "an even integer >= 2" });
        }
        if spacing == Spacing::SymmetricLog && x_min == 0.0 {
            return Err(Error::Configuration("symmetric-log spacing needs a positive x_min".into()));
        }
        Ok(Self { x_max, x_min, m_cells, spacing })
    }

    /// `x_max = 4π/δ`, `x_min = 1e-3`, `2^16` linear cells.
    pub fn default_for_mesh(delta: f64) -> Result<Self> {
        Self::new(4.0 * PI / delta, 1e-3, 1 << 16, Spacing::Linear)
    }

    /// Positive-half cells as `(lower, upper)` edges. For a linear grid
    /// the first cell is `[0, Δx]` before the hole is applied.
    fn half_cells(&self) -> Vec<(f64, f64)> {
        let m = self.m_cells / 2;
        match self.spacing {
            Spacing::Linear => {
                let dx = self.x_max / m as f64;
                (0..m).map(|c| (c as f64 * dx, (c + 1) as f64 * dx)).collect()
            }
            Spacing::SymmetricLog => {
                let ratio = (self.x_max / self.x_min).ln() / m as f64;
                (0..m)
                    .map(|c| (self.x_min * (ratio * c as f64).exp(), self.x_min * (ratio * (c + 1) as f64).exp()))
                    .collect()
            }
        }
    }
}

/// Shape of a spectral kernel `Ψ`.
#[derive(Clone)]
pub enum PsiShape {
    /// `|x|^{-H-1/α}`.
    Hfsm { alpha: f64, h: f64 },
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        singular_at_zero: bool,
        alpha_weight_integrable: bool,
    },
}

impl fmt::Debug for PsiShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsiShape::Hfsm { alpha, h } => write!(f, "Hfsm {{ alpha: {alpha}, h: {h} }}"),
            PsiShape::Custom { name, singular_at_zero, alpha_weight_integrable, .. } => write!(
                f,
                "Custom {{ name: {name:?}, singular_at_zero: {singular_at_zero}, alpha_weight_integrable: {alpha_weight_integrable} }}"
            ),
        }
    }
}

/// Even spectral kernel `Ψ = scale · shape`.
#[derive(Debug, Clone)]
pub struct KernelPsi {
    shape: PsiShape,
    scale: f64,
}

impl KernelPsi {
    /// HFSM kernel `|x|^{-H-1/α}`.
    pub fn hfsm(alpha: StabilityIndex, h: f64) -> Result<Self> {
        check_range("H", h, h > 0.0 && h < 1.0, "(0, 1)")?;
        Ok(Self { shape: PsiShape::Hfsm { alpha: alpha.get(), h }, scale: 1.0 })
    }

    /// Kernel from an even function `f`. `alpha_weight_integrable` asserts
    /// `∫ |f|^α min(1, |x|^α) dx < ∞`.
    pub fn custom<F>(name: &str, f: F, singular_at_zero: bool, alpha_weight_integrable: bool) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            shape: PsiShape::Custom { name: name.into(), f: Arc::new(f), singular_at_zero, alpha_weight_integrable },
            scale: 1.0,
        }
    }

    /// `c · Ψ`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { shape: self.shape.clone(), scale: self.scale * c }
    }

    pub fn shape(&self) -> &PsiShape {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape_eval(&self, x: f64) -> f64 {
        match &self.shape {
            PsiShape::Hfsm { alpha, h } => x.abs().powf(-h - 1.0 / alpha),
            PsiShape::Custom { f, .. } => f(x.abs()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.scale * self.shape_eval(x)
    }

    pub fn singular_at_zero(&self) -> bool {
        match &self.shape {
            PsiShape::Hfsm { .. } => true,
            PsiShape::Custom { singular_at_zero, .. } => *singular_at_zero,
        }
    }

    pub fn alpha_weight_integrable(&self) -> bool {
        match &self.shape {
            PsiShape::Hfsm { .. } => true,
            PsiShape::Custom { alpha_weight_integrable, .. } => *alpha_weight_integrable,
        }
    }

    pub fn descriptor(&self) -> String {
        match &self.shape {
            PsiShape::Hfsm { alpha, h } => format!("hfsm(alpha={alpha},H={h})"),
            PsiShape::Custom { name, .. } => name.clone(),
        }
    }

    /// `∫_lo^hi |Ψ(x)|^α dx` in closed form, where available.
    pub fn cell_mass_closed(&self, alpha: f64, lo: f64, hi: f64) -> Option<f64> {
        match &self.shape {
            PsiShape::Hfsm { alpha: pa, h } if *pa == alpha => {
                // ∫ x^{-αH-1} = (lo^{-αH} - hi^{-αH}) / (αH), without cancellation
                let a = alpha * h;
                let m = lo.powf(-a) * -(-a * ((hi - lo) / lo).ln_1p()).exp_m1() / a;
                Some(self.scale.abs().powf(alpha) * m)
            }
            _ => None,
        }
    }

    /// Control mass of a cell: closed form when available, otherwise the
    /// midpoint value `|Ψ(x_c)|^α (hi - lo)`.
    pub fn cell_mass(&self, alpha: f64, lo: f64, hi: f64) -> f64 {
        self.cell_mass_closed(alpha, lo, hi)
            .unwrap_or_else(|| self.eval(0.5 * (lo + hi)).abs().powf(alpha) * (hi - lo))
    }

    /// `∫_lo^hi |x Ψ(x)|^α dx` in closed form, where available.
    pub fn alpha_moment_closed(&self, alpha: f64, lo: f64, hi: f64) -> Option<f64> {
        match &self.shape {
            PsiShape::Hfsm { alpha: pa, h } if *pa == alpha => {
                let e = alpha * (1.0 - h);
                Some(self.scale.abs().powf(alpha) * (hi.powf(e) - lo.powf(e)) / e)
            }
            _ => None,
        }
    }

    /// `∫_0^{x_min} |x Ψ(x)|^α dx`, the control mass of the linearized
    /// hole `(e^{itx} - 1) ≈ itx` on one side of the origin.
    pub fn hole_mass(&self, alpha: f64, x_min: f64) -> Result<f64> {
        if x_min <= 0.0 {
            return Ok(0.0);
        }
        match self.alpha_moment_closed(alpha, 0.0, x_min) {
            Some(m) => Ok(m),
            None => integrate(|x| (x * self.eval(x)).abs().powf(alpha), 0.0, x_min, Tolerance::new(0.0, 1e-8))
                .map(|e| e.value),
        }
    }
}

/// A cell of the positive half-line with its representative frequency and
/// control mass; the mirrored cell carries the same mass.
#[derive(Debug, Clone, Copy)]
struct Cell {
    x: f64,
    mass: f64,
}

/// `P` such that `Δx δ = 2π/P`, if the linear grid allows folding onto an
/// FFT of length `P`.
fn fft_period(grid: &SpectralGrid, delta: f64) -> Option<usize> {
    if grid.spacing != Spacing::Linear {
        return None;
    }
    let dx = grid.x_max / (grid.m_cells / 2) as f64;
    let p = 2.0 * PI / (dx * delta);
    let pr = p.round();
    ((p - pr).abs() < 1e-9 * p && pr >= 1.0).then_some(pr as usize)
}

/// Positive-half cells split into the directly summed cells next to the
/// origin and the bulk, with the grid index of the first bulk cell.
///
/// For singular `Ψ` on a linear grid the first [`INNER_LINEAR_CELLS`] cells
/// are replaced by geometric sub-cells whose representative frequency
/// matches `∫ |x|^α |Ψ|^α` where a closed form exists, so that the small-`t`
/// scale `|t|^α ∫ |xΨ|^α` is reproduced exactly.
fn split_cells(psi: &KernelPsi, alpha: f64, grid: &SpectralGrid) -> (Vec<Cell>, usize, Vec<Cell>) {
    let cells = grid.half_cells();
    let mut origin = Vec::new();
    let mut bulk_first = 0;
    if grid.spacing == Spacing::Linear {
        if psi.singular_at_zero() {
            bulk_first = INNER_LINEAR_CELLS.min(cells.len());
            let hi = cells[bulk_first - 1].1;
            if grid.x_min < hi {
                let ratio = (hi / grid.x_min).ln() / INNER_SUBCELLS as f64;
                for s in 0..INNER_SUBCELLS {
                    let lo_s = grid.x_min * (ratio * s as f64).exp();
                    let hi_s = if s + 1 == INNER_SUBCELLS { hi } else { grid.x_min * (ratio * (s + 1) as f64).exp() };
                    let mass = psi.cell_mass(alpha, lo_s, hi_s);
                    let x = match psi.alpha_moment_closed(alpha, lo_s, hi_s) {
                        Some(mom) if mass > 0.0 => (mom / mass).powf(1.0 / alpha),
                        _ => (lo_s * hi_s).sqrt(),
                    };
                    origin.push(Cell { x, mass });
                }
            }
        } else {
            bulk_first = 1;
            let (lo, hi) = (grid.x_min, cells[0].1);
            if lo < hi {
                origin.push(Cell { x: 0.5 * (lo + hi), mass: psi.cell_mass(alpha, lo, hi) });
            }
        }
    }
    let bulk = cells[bulk_first..]
        .iter()
        .map(|&(lo, hi)| {
            let lo = lo.max(grid.x_min).min(hi);
            Cell { x: 0.5 * (lo + hi), mass: if hi > lo { psi.cell_mass(alpha, lo, hi) } else { 0.0 } }
        })
        .collect();
    (origin, bulk_first, bulk)
}

/// Draw `a_c = ΔM(cell) + conj(ΔM(-cell))` so that the real process is
/// `Re Σ_c (e^{itx_c} - 1) a_c` over positive cells.
fn draw_folded<R: Rng + ?Sized>(sampler: &IsotropicSas, mass: f64, rng: &mut R) -> Complex64 {
    if mass <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let plus = sampler.sample(mass, rng);
    let minus = sampler.sample(mass, rng);
    plus + minus.conj()
}

/// `Re Σ_c (e^{i t_j x_c} - 1) a_c` by direct summation.
fn direct_sum(cells: &[Cell], amps: &[Complex64], times: &TimeGrid, out: &mut [f64]) {
    let base: f64 = amps.iter().map(|a| a.re).sum();
    for (j, o) in out.iter_mut().enumerate() {
        let t = times.time(j);
        let mut acc = 0.0;
        for (c, a) in cells.iter().zip(amps) {
            let (s, co) = (t * c.x).sin_cos();
            acc += co * a.re - s * a.im;
        }
        *o += acc - base;
    }
}

/// Simulate `X(t) = Re ∫ (e^{itx} - 1) Ψ(x) M(dx)` on `times`, with `M` a
/// complex isotropic SαS random measure with Lebesgue control measure.
///
/// Each grid cell contributes an isotropic draw whose control mass is
/// `∫_cell |Ψ|^α`: the closed form for the HFSM kernel, the midpoint rule
/// otherwise. When `Ψ` is singular at 0 the linear cell touching the origin
/// is replaced by geometric sub-cells reaching down to the hole radius
/// `x_min`. Linear grids with `2π/(Δx δ)` integral are summed by an FFT of
/// that length; other grids are summed directly.
pub fn simulate_stat_incr<R: Rng + ?Sized>(
    psi: &KernelPsi,
    alpha: StabilityIndex,
    grid: &SpectralGrid,
    times: &TimeGrid,
    rng: &mut R,
) -> Result<PathSample> {
    let a = alpha.get();
    if !psi.alpha_weight_integrable() {
        return Err(Error::Configuration(format!("kernel {} is not admissible", psi.descriptor())));
    }
    if let PsiShape::Hfsm { alpha: pa, .. } = psi.shape() {
        if *pa != a {
            return Err(Error::Configuration(format!("HFSM kernel built for alpha = {pa} used with alpha = {a}")));
        }
    }
    if grid.x_max <= PI / times.delta {
        return Err(Error::Configuration(format!(
            "grid cutoff {} does not exceed the Nyquist frequency {}",
            grid.x_max,
            PI / times.delta
        )));
    }
    let singular = psi.singular_at_zero();
    if singular && grid.x_min == 0.0 {
        return Err(Error::Configuration(
            "kernel is singular at 0: exclude a hole x_min > 0 so that the cells near 0 use the closed-form control mass"
                .into(),
        ));
    }
    let sampler = IsotropicSas::new(alpha);
    let (direct_cells, bulk_first, bulk) = split_cells(psi, a, grid);
    let mut out = vec![0.0; times.n];

    // draws in a fixed order: origin sub-cells, then bulk cells upwards
    let direct_amps: Vec<Complex64> = direct_cells.iter().map(|c| draw_folded(&sampler, c.mass, rng)).collect();
    let bulk_amps: Vec<Complex64> = bulk.iter().map(|c| draw_folded(&sampler, c.mass, rng)).collect();

    // below the hole (e^{itx} - 1) is replaced by itx: a random drift t·S
    let hole = draw_folded(&sampler, psi.hole_mass(a, grid.x_min)?, rng);

    direct_sum(&direct_cells, &direct_amps, times, &mut out);

    let period = if cfg!(feature = "std") { fft_period(grid, times.delta) } else { None };
    match period {
        Some(p) => {
            // x_c δ j = (c + 1/2) 2π j / P: fold cells modulo P, one FFT
            let dx = grid.x_max / (grid.m_cells / 2) as f64;
            let mut folded = vec![Complex64::new(0.0, 0.0); p];
            let mut base = 0.0;
            for (i, (cell, amp)) in bulk.iter().zip(&bulk_amps).enumerate() {
                let c = i + bulk_first;
                let phase = Complex64::from_polar(1.0, times.t0 * cell.x);
                folded[c % p] += amp * phase;
                base += amp.re;
            }
            dft::inverse_unnormalized(&mut folded);
            let half_step = 0.5 * dx * times.delta;
            for (j, o) in out.iter_mut().enumerate() {
                let y = folded[j % p] * Complex64::from_polar(1.0, half_step * j as f64);
                *o += y.re - base;
            }
        }
        None => direct_sum(&bulk, &bulk_amps, times, &mut out),
    }

    for (j, o) in out.iter_mut().enumerate() {
        let t = times.time(j);
        *o = if t == 0.0 { 0.0 } else { *o - t * hole.im };
    }
    let generator = match psi.shape() {
        PsiShape::Hfsm { alpha, h } if psi.scale() == 1.0 => Generator::Hfsm { alpha: *alpha, h: *h, grid: *grid },
        _ => Generator::StatIncr { psi: psi.descriptor(), alpha: a, grid: *grid },
    };
    PathSample::new(times.t0, times.delta, out, PathMeta { generator, seed: None })
}

/// Simulate a real harmonizable fractional stable motion, `Ψ(x) = |x|^{-H-1/α}`.
pub fn simulate_hfsm<R: Rng + ?Sized>(
    alpha: StabilityIndex,
    h: f64,
    grid: &SpectralGrid,
    times: &TimeGrid,
    rng: &mut R,
) -> Result<PathSample> {
    simulate_stat_incr(&KernelPsi::hfsm(alpha, h)?, alpha, grid, times, rng)
}

/// `σ^α / λ_α` of `X(t)` under the grid discretization, i.e.
/// `Σ_cells |2 sin(t x_c / 2)|^α · 2 m_c` plus the linearized hole
/// `2 |t|^α m_hole`; exposed for validation.
pub fn discretized_scale_integral(psi: &KernelPsi, alpha: f64, grid: &SpectralGrid, t: f64) -> Result<f64> {
    let mut acc = 2.0 * t.abs().powf(alpha) * psi.hole_mass(alpha, grid.x_min)?;
    let (origin, _, bulk) = split_cells(psi, alpha, grid);
    for c in origin.iter().chain(&bulk) {
        acc += 2.0 * (2.0 * (0.5 * t * c.x).sin()).abs().powf(alpha) * c.mass;
    }
    Ok(acc)
}

/// A normalized even frequency law `ρ` on ℝ.
pub trait FrequencyLaw {
    fn density(&self, z: f64) -> f64;

    /// One signed draw.
    fn sample(&self, rng: &mut dyn RngCore) -> f64;

    /// `∫ ρ` by quadrature over the two half-lines.
    fn total_probability(&self) -> Result<f64> {
        let tol = Tolerance::new(1e-300, 1e-11);
        let head = integrate(|z| self.density(z), 0.0, 1.0, tol)?.value;
        let tail = integrate_to_infinity(|z| self.density(z), 1.0, tol)?.value;
        Ok(2.0 * (head + tail))
    }
}

/// Frequency law of the mollified HFSM: `|Z|^q ~ Γ(α(p-H)/q, rate αθ^{-q})`
/// with a uniform random sign.
#[derive(Debug, Clone, Copy)]
pub struct HfsmFrequencyLaw {
    pub density: HfsmDensity,
    gamma: Gamma<f64>,
}

impl HfsmFrequencyLaw {
    pub fn new(alpha: f64, h: f64, p: f64, q: f64, theta: f64) -> Result<Self> {
        let density = rho_hfsm(alpha, h, p, q, theta)?;
        let gamma = Gamma::new(density.shape(), 1.0 / density.rate())
            .map_err(|e| Error::Numerical(format!("gamma law: {e}")))?;
        Ok(Self { density, gamma })
    }
}

impl FrequencyLaw for HfsmFrequencyLaw {
    fn density(&self, z: f64) -> f64 {
        self.density.eval(z)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let g = self.gamma.sample(rng);
        let z = g.powf(1.0 / self.density.q);
        if rng.random::<bool>() {
            z
        } else {
            -z
        }
    }
}

/// Draw `n_draws` signed frequencies with density `ρ_θ` of the mollified HFSM.
pub fn sample_frequencies_hfsm<R: RngCore>(
    alpha: f64,
    h: f64,
    p: f64,
    q: f64,
    theta: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let law = HfsmFrequencyLaw::new(alpha, h, p, q, theta)?;
    Ok((0..n_draws).map(|_| law.sample(rng)).collect())
}

/// Truncation order below which the LePage remainder is flagged.
pub const LEPAGE_MIN_TERMS: usize = 50;
/// Default LePage truncation order.
pub const LEPAGE_DEFAULT_TERMS: usize = 2000;

/// Random ingredients of a truncated LePage series.
#[derive(Debug, Clone, PartialEq)]
pub struct LePageEnsemble {
    pub alpha: f64,
    /// Arrival times `Γ_1 < Γ_2 < …`.
    pub gammas: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    /// Signed frequencies `Z_k`.
    pub z: Vec<f64>,
    pub total_mass: f64,
    /// `C_α m̃(ℝ)^{1/α}`.
    pub prefactor: f64,
}

impl LePageEnsemble {
    pub fn draw<R: RngCore>(
        alpha: StabilityIndex,
        law: &dyn FrequencyLaw,
        total_mass: f64,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_range("total_mass", total_mass, total_mass > 0.0, "(0, ∞)")?;
        if k < 1 {
            return Err(Error::InvalidParameter { name: "K", value: 0.0, expected: "K >= 1" });
        }
        let a = alpha.get();
        let prefactor = const_c_alpha(alpha)? * total_mass.powf(1.0 / a);
        let mut gammas = Vec::with_capacity(k);
        let mut g1 = Vec::with_capacity(k);
        let mut g2 = Vec::with_capacity(k);
        let mut z = Vec::with_capacity(k);
        let mut arrival = 0.0;
        for _ in 0..k {
            let e: f64 = Exp1.sample(rng);
            arrival += e;
            gammas.push(arrival);
            g1.push(StandardNormal.sample(rng));
            g2.push(StandardNormal.sample(rng));
            z.push(law.sample(rng));
        }
        Ok(Self { alpha: a, gammas, g1, g2, z, total_mass, prefactor })
    }

    pub fn k(&self) -> usize {
        self.gammas.len()
    }

    /// Amplitudes `R_k = C_α m̃^{1/α} Γ_k^{-1/α} (G1_k² + G2_k²)^{1/2}`.
    pub fn amplitudes(&self) -> Vec<f64> {
        (0..self.k())
            .map(|k| self.prefactor * self.gammas[k].powf(-1.0 / self.alpha) * self.g1[k].hypot(self.g2[k]))
            .collect()
    }

    /// Indices ordered by decreasing amplitude.
    pub fn order_by_amplitude(&self) -> Vec<usize> {
        let amps = self.amplitudes();
        let mut idx: Vec<usize> = (0..self.k()).collect();
        idx.sort_by(|&i, &j| amps[j].total_cmp(&amps[i]));
        idx
    }

    /// Scale of the neglected terms, `C_α m̃^{1/α} (Σ_{k>K} k^{-2/α})^{1/2}`,
    /// using `Γ_k ~ k`.
    pub fn remainder_scale(&self) -> f64 {
        let k = self.k() as f64;
        let e = 2.0 / self.alpha;
        self.prefactor * ((k + 0.5).powf(1.0 - e) / (e - 1.0)).sqrt()
    }

    /// Whether the truncation order is below [`LEPAGE_MIN_TERMS`].
    pub fn truncation_warning(&self) -> bool {
        self.k() < LEPAGE_MIN_TERMS
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.k() {
            let (s, c) = (t * self.z[k]).sin_cos();
            acc += self.gammas[k].powf(-1.0 / self.alpha) * (self.g1[k] * c + self.g2[k] * s);
        }
        self.prefactor * acc
    }

    pub fn evaluate(&self, times: &TimeGrid) -> Result<PathSample> {
        let weights: Vec<f64> = self.gammas.iter().map(|g| g.powf(-1.0 / self.alpha)).collect();
        let values = (0..times.n)
            .map(|j| {
                let t = times.time(j);
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    let (s, c) = (t * self.z[k]).sin_cos();
                    acc += w * (self.g1[k] * c + self.g2[k] * s);
                }
                self.prefactor * acc
            })
            .collect();
        PathSample::new(
            times.t0,
            times.delta,
            values,
            PathMeta {
                generator: Generator::LePage { alpha: self.alpha, k: self.k(), total_mass: self.total_mass },
                seed: None,
            },
        )
    }
}

/// Truncated LePage series
/// `C_α m̃^{1/α} Σ_{k≤K} Γ_k^{-1/α} (G1_k cos(tZ_k) + G2_k sin(tZ_k))`.
///
/// `rho` must integrate to 1 (checked to 1e-6).
pub fn simulate_lepage<R: RngCore>(
    alpha: StabilityIndex,
    rho: &dyn FrequencyLaw,
    total_mass: f64,
    k: usize,
    times: &TimeGrid,
    rng: &mut R,
) -> Result<(PathSample, LePageEnsemble)> {
    let mass = rho.total_probability()?;
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Configuration(format!("frequency density integrates to {mass}, not 1")));
    }
    let ens = LePageEnsemble::draw(alpha, rho, total_mass, k, rng)?;
    let path = ens.evaluate(times)?;
    Ok((path, ens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma_p;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn a(x: f64) -> StabilityIndex {
        StabilityIndex::new(x).unwrap()
    }

    #[test]
    fn path_sample_invariants() {
        let m = PathMeta::provided();
        assert!(PathSample::new(0.0, 0.01, vec![1.0], m.clone()).is_err());
        assert!(PathSample::new(0.0, 0.0, vec![1.0, 2.0], m.clone()).is_err());
        assert!(matches!(PathSample::new(0.0, 0.1, vec![1.0, f64::NAN], m), Err(Error::NonFinite(1))));
    }

    #[test]
    fn grid_validation() {
        assert!(SpectralGrid::new(10.0, 0.0, 3, Spacing::Linear).is_err());
        assert!(SpectralGrid::new(10.0, 0.0, 8, Spacing::SymmetricLog).is_err());
        let g = SpectralGrid::default_for_mesh(0.01).unwrap();
        assert_eq!(fft_period(&g, 0.01), Some(1 << 14));
    }

    #[test]
    fn cell_mass_closed_form_vs_quadrature() {
        let psi = KernelPsi::hfsm(a(1.5), 0.75).unwrap();
        for &(lo, hi) in &[(1e-3, 2e-3), (0.5, 0.55), (1000.0, 1000.04)] {
            let q = integrate(|x: f64| x.powf(-1.5 * 0.75 - 1.0), lo, hi, Tolerance::new(0.0, 1e-13)).unwrap().value;
            let c = psi.cell_mass_closed(1.5, lo, hi).unwrap();
            assert!((c / q - 1.0).abs() < 1e-11);
        }
        assert_eq!(psi.cell_mass_closed(1.2, 1.0, 2.0), None);
    }

    #[test]
    fn x_at_zero_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = SpectralGrid::new(4.0 * PI / 0.01, 1e-3, 1 << 12, Spacing::Linear).unwrap();
        let times = TimeGrid::new(0.0, 0.01, 64).unwrap();
        let p = simulate_hfsm(a(1.5), 0.75, &grid, &times, &mut rng).unwrap();
        assert_eq!(p.values[0], 0.0);
        let psi = KernelPsi::custom("gauss", |x: f64| (-x * x).exp(), false, true);
        let p = simulate_stat_incr(&psi, a(1.2), &grid, &times, &mut rng).unwrap();
        assert_eq!(p.values[0], 0.0);
    }

    #[test]
    fn configuration_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let times = TimeGrid::new(0.0, 0.01, 16).unwrap();
        let nohole = SpectralGrid::new(4.0 * PI / 0.01, 0.0, 1 << 10, Spacing::Linear).unwrap();
        assert!(matches!(simulate_hfsm(a(1.5), 0.5, &nohole, &times, &mut rng), Err(Error::Configuration(_))));
        let low = SpectralGrid::new(PI / 0.01, 1e-3, 1 << 10, Spacing::Linear).unwrap();
        assert!(matches!(simulate_hfsm(a(1.5), 0.5, &low, &times, &mut rng), Err(Error::Configuration(_))));
        let inadmissible = KernelPsi::custom("bad", |x: f64| x.abs().powf(-3.0), true, false);
        let g = SpectralGrid::default_for_mesh(0.01).unwrap();
        assert!(simulate_stat_incr(&inadmissible, a(1.5), &g, &times, &mut rng).is_err());
        assert!(simulate_hfsm(a(1.5), 1.0, &g, &times, &mut rng).is_err());
    }

    #[test]
    fn fft_route_matches_direct_route() {
        // same draws, folded FFT sum versus direct summation
        let grid = SpectralGrid::new(4.0 * PI / 0.01, 1e-3, 1 << 10, Spacing::Linear).unwrap();
        let psi = KernelPsi::hfsm(a(1.5), 0.6).unwrap();
        for &t0 in &[0.0, 0.37] {
            let times = TimeGrid::new(t0, 0.01, 700).unwrap();
            let mut r1 = ChaCha8Rng::seed_from_u64(4);
            let fast = simulate_stat_incr(&psi, a(1.5), &grid, &times, &mut r1).unwrap();
            // replay the same draws through a direct evaluation of the cells
            let mut r2 = ChaCha8Rng::seed_from_u64(4);
            let sampler = IsotropicSas::new(a(1.5));
            let (origin, _, bulk) = split_cells(&psi, 1.5, &grid);
            let all: Vec<Cell> = origin.into_iter().chain(bulk).collect();
            let amps: Vec<Complex64> = all.iter().map(|c| draw_folded(&sampler, c.mass, &mut r2)).collect();
            let hole = draw_folded(&sampler, psi.hole_mass(1.5, grid.x_min).unwrap(), &mut r2);
            let mut slow = vec![0.0; times.n];
            direct_sum(&all, &amps, &times, &mut slow);
            for (j, y) in slow.iter_mut().enumerate() {
                let t = times.time(j);
                *y = if t == 0.0 { 0.0 } else { *y - t * hole.im };
            }
            let scale = slow.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (x, y) in fast.values.iter().zip(&slow) {
                assert!((x - y).abs() < 1e-9 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let grid = SpectralGrid::default_for_mesh(0.01).unwrap();
        let times = TimeGrid::from_mesh(0.01, 2000).unwrap();
        let run = || simulate_hfsm(a(1.5), 0.75, &grid, &times, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let (x, y) = (run(), run());
        assert!(x.values.iter().zip(&y.values).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn smaller_hurst_gives_rougher_paths() {
        let grid = SpectralGrid::default_for_mesh(0.01).unwrap();
        let times = TimeGrid::from_mesh(0.01, 4000).unwrap();
        let mut wins = 0;
        for seed in 0..10 {
            let mai = |h: f64| {
                let p = simulate_hfsm(a(1.5), h, &grid, &times, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                p.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (p.len() - 1) as f64
            };
            if mai(0.25) > mai(0.75) {
                wins += 1;
            }
        }
        assert_eq!(wins, 10);
    }

    #[test]
    fn frequency_draws_follow_gamma_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let z = sample_frequencies_hfsm(1.5, 0.75, 2.0, 2.0, 20.0, n, &mut rng).unwrap();
        let zq: Vec<f64> = z.iter().map(|v| v * v).collect();
        let mean = zq.iter().sum::<f64>() / n as f64;
        // Γ(0.9375, rate 0.00375): mean 250, variance 0.9375/0.00375²
        let sd = (0.9375f64).sqrt() / 0.00375;
        assert!((mean - 250.0).abs() < 4.0 * sd / (n as f64).sqrt());
        let sign_mean = z.iter().map(|v| v.signum()).sum::<f64>() / n as f64;
        assert!(sign_mean.abs() < 4.0 / (n as f64).sqrt());
        // KS statistic of |Z|² against the Gamma CDF
        let mut s = zq.clone();
        s.sort_by(|x, y| x.total_cmp(y));
        let d = s
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = gamma_p(0.9375, 0.00375 * x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.63 / (n as f64).sqrt());
    }

    #[test]
    fn frequency_histogram_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let z = sample_frequencies_hfsm(1.5, 0.75, 2.0, 2.0, 20.0, n, &mut rng).unwrap();
        let rho = rho_hfsm(1.5, 0.75, 2.0, 2.0, 20.0).unwrap();
        let width = 2.0;
        let bins = 100;
        let mut counts = vec![0usize; bins];
        for &v in &z {
            if v.abs() < 100.0 {
                counts[((v + 100.0) / width) as usize] += 1;
            }
        }
        let l1: f64 = (0..bins)
            .map(|b| {
                let lo = -100.0 + b as f64 * width;
                let p = integrate(|x| rho.eval(x), lo, lo + width, Tolerance::new(1e-300, 1e-10)).unwrap().value;
                (counts[b] as f64 / n as f64 - p).abs()
            })
            .sum();
        assert!(l1 < 0.05, "L1 distance {l1}");
    }

    #[test]
    fn lepage_single_term_is_a_sinusoid() {
        let law = HfsmFrequencyLaw::new(1.5, 0.75, 2.0, 2.0, 20.0).unwrap();
        let times = TimeGrid::from_mesh(0.01, 512).unwrap();
        let (path, ens) = simulate_lepage(a(1.5), &law, 1.0, 1, &times, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(ens.truncation_warning());
        let amp = ens.amplitudes()[0];
        let phase = ens.g2[0].atan2(ens.g1[0]);
        for (j, x) in path.values.iter().enumerate() {
            let t = times.time(j);
            assert!((x - amp * (t * ens.z[0] - phase).cos()).abs() < 1e-12 * amp.max(1.0));
        }
    }

    #[test]
    fn lepage_ensemble_structure() {
        let law = HfsmFrequencyLaw::new(1.5, 0.75, 2.0, 2.0, 20.0).unwrap();
        let ens = LePageEnsemble::draw(a(1.5), &law, 2.0, 2000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(ens.gammas.windows(2).all(|w| w[0] < w[1]));
        assert!(!ens.truncation_warning());
        let amps = ens.amplitudes();
        let order = ens.order_by_amplitude();
        assert!(order.windows(2).all(|w| amps[w[0]] >= amps[w[1]]));
        assert!(ens.remainder_scale() > 0.0);
        let t = ens.value_at(0.3);
        let p = ens.evaluate(&TimeGrid::new(0.3, 0.1, 2).unwrap()).unwrap();
        assert!((p.values[0] - t).abs() < 1e-12 * t.abs().max(1.0));
    }

    #[test]
    fn lepage_rejects_unnormalized_density() {
        struct Half;
        impl FrequencyLaw for Half {
            fn density(&self, z: f64) -> f64 {
                0.25 * (-z.abs()).exp()
            }
            fn sample(&self, _rng: &mut dyn RngCore) -> f64 {
                0.0
            }
        }
        let times = TimeGrid::from_mesh(0.01, 16).unwrap();
        assert!(simulate_lepage(a(1.5), &Half, 1.0, 100, &times, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }
}

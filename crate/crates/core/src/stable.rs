//! Symmetric α-stable laws: parameter types, samplers, the constants `C_α`
//! and `λ_α`, and the α-sine transform with its Fourier-series coefficients.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{check_range, Error, Result};
use crate::quadrature::{integrate, integrate_pieces, Tolerance};
use crate::special::{gamma, signed_ln_rgamma};

/// Index of stability `α ∈ (0, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StabilityIndex(f64);

impl StabilityIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        check_range("alpha", alpha, alpha > 0.0 && alpha < 2.0, "(0, 2)")?;
        Ok(Self(alpha))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Scale parameter `σ > 0` of an SαS law.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SasScale(f64);

impl SasScale {
    pub fn new(sigma: f64) -> Result<Self> {
        check_range("sigma", sigma, sigma > 0.0, "(0, ∞)")?;
        Ok(Self(sigma))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// One draw from `SαS(σ)`, i.e. characteristic function `exp(-σ^α |s|^α)`,
/// by the Chambers–Mallows–Stuck transform.
pub fn sample_sas<R: Rng + ?Sized>(alpha: StabilityIndex, sigma: SasScale, rng: &mut R) -> f64 {
    let a = alpha.get();
    let v = PI * (open_unit(rng) - 0.5);
    let w: f64 = Exp1.sample(rng);
    let x = if a == 1.0 {
        v.tan()
    } else {
        let cos_v = v.cos();
        (a * v).sin() / cos_v.powf(1.0 / a) * (((1.0 - a) * v).cos() / w).powf((1.0 - a) / a)
    };
    sigma.get() * x
}

/// Positive `β`-stable draw with Laplace transform `E e^{-uA} = e^{-u^β}`,
/// `β ∈ (0, 1)` (Kanter's representation).
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    debug_assert!(beta > 0.0 && beta < 1.0);
    let u = PI * open_unit(rng);
    let e: f64 = Exp1.sample(rng);
    let sin_u = u.sin();
    (beta * u).sin() / sin_u.powf(1.0 / beta) * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta)
}

/// Sampler for increments of a complex isotropic SαS random measure.
///
/// A draw over a set of control mass `m` is `sqrt(2 c A) (G₁ + i G₂)` with
/// `c = (λ_α m)^{2/α}`, `A` positive (α/2)-stable and `G₁, G₂` standard
/// normal, so that `E exp(i⟨s, Z⟩) = exp(-λ_α m |s|^α)`; in particular the
/// real part is `SαS((λ_α m)^{1/α})`.
#[derive(Debug, Clone, Copy)]
pub struct IsotropicSas {
    alpha: StabilityIndex,
    unit_factor: f64,
}

impl IsotropicSas {
    pub fn new(alpha: StabilityIndex) -> Self {
        let a = alpha.get();
        let lambda = const_lambda_alpha(a).expect("alpha in (0, 2)");
        Self {
            alpha,
            unit_factor: (2.0 * lambda.powf(2.0 / a)).sqrt(),
        }
    }

    pub fn alpha(&self) -> StabilityIndex {
        self.alpha
    }

    /// Draw over a set of unit control mass.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let a = self.alpha.get();
        let amp = if a == 2.0 {
            1.0
        } else {
            sample_positive_stable(0.5 * a, rng).sqrt()
        };
        let g1: f64 = StandardNormal.sample(rng);
        let g2: f64 = StandardNormal.sample(rng);
        Complex64::new(g1, g2) * (amp * self.unit_factor)
    }

    pub fn sample<R: Rng + ?Sized>(&self, cell_mass: f64, rng: &mut R) -> Complex64 {
        debug_assert!(cell_mass > 0.0);
        self.sample_unit(rng) * cell_mass.powf(1.0 / self.alpha.get())
    }
}

/// Increment of a complex isotropic SαS random measure over a set with
/// control mass `cell_mass > 0`.
pub fn sample_isotropic_complex_sas<R: Rng + ?Sized>(
    alpha: StabilityIndex,
    cell_mass: f64,
    rng: &mut R,
) -> Complex64 {
    IsotropicSas::new(alpha).sample(cell_mass, rng)
}

/// `∫_0^∞ sin(x) / x^α dx` for `α ∈ (0, 2)`.
///
/// The first half period is integrated after the substitution
/// `x = u^{1/(2-α)}`, which removes the `x^{1-α}` behaviour at the origin.
/// The remaining half periods form an alternating series that is summed with
/// repeated averaging of partial sums.
pub fn sine_power_integral(alpha: StabilityIndex) -> Result<f64> {
    let a = alpha.get();
    let gamma_exp = 1.0 / (2.0 - a);
    let tol = Tolerance::new(1e-15, 1e-13);
    let head = integrate(
        |u: f64| {
            let x = u.powf(gamma_exp);
            if x < 1e-8 {
                return gamma_exp;
            }
            gamma_exp * x.sin() / x
        },
        0.0,
        PI.powf(2.0 - a),
        tol,
    )?
    .value;

    const HALF_PERIODS: usize = 48;
    let mut partial = Vec::with_capacity(HALF_PERIODS);
    let mut acc = 0.0;
    for k in 1..=HALF_PERIODS {
        let lo = k as f64 * PI;
        let term = integrate(|x: f64| x.sin() * x.powf(-a), lo, lo + PI, tol)?.value;
        acc += term;
        partial.push(acc);
    }
    // Euler transform by repeated averaging; stop one level before the
    // table runs out so that the last two levels can be compared.
    let mut level = partial;
    let mut prev_last = f64::NAN;
    while level.len() > 2 {
        prev_last = *level.last().unwrap();
        level = level.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let tail = 0.5 * (level[0] + level[1]);
    if !(tail - prev_last).abs().is_finite() || (tail - prev_last).abs() > 1e-9 * (head + tail).abs() {
        return Err(Error::Numerical(alloc::format!(
            "alternating tail sum did not settle for alpha = {a}"
        )));
    }
    Ok(head + tail)
}

/// `C_α = (2^{α/2} Γ(1 + α/2) ∫_0^∞ sin(x)/x^α dx)^{-1/α}`, the constant of
/// the LePage series of a stationary harmonizable SαS process.
pub fn const_c_alpha(alpha: StabilityIndex) -> Result<f64> {
    let a = alpha.get();
    let integral = sine_power_integral(alpha)?;
    Ok((2f64.powf(0.5 * a) * gamma(1.0 + 0.5 * a) * integral).powf(-1.0 / a))
}

/// `λ_α = (2π)^{-1} ∫_0^{2π} |cos x|^α dx` for `α ∈ (0, 2]`.
pub fn const_lambda_alpha(alpha: f64) -> Result<f64> {
    check_range("alpha", alpha, alpha > 0.0 && alpha <= 2.0, "(0, 2]")?;
    let quarter = integrate(|x: f64| x.cos().max(0.0).powf(alpha), 0.0, FRAC_PI_2, Tolerance::new(1e-15, 1e-13))?;
    Ok(quarter.value * 2.0 / PI)
}

/// Fourier coefficients of `|sin y|^α = c₀ + 2 Σ_{k≥1} c_k cos(2ky)`:
/// `c_k = (-1)^k 2^{-α} Γ(1+α) / (Γ(1+α/2-k) Γ(1+α/2+k))`.
///
/// Evaluating the identity at `y = 0` gives `Σ_{k≥1} c_k = -c₀/2`; every
/// `c_k` with `k ≥ 1` is negative and `|c_k| ~ k^{-1-α}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SineCoefficients {
    pub alpha: StabilityIndex,
    /// `c[k]` for `k = 0..=k_max`.
    pub c: Vec<f64>,
}

impl SineCoefficients {
    pub fn c0(&self) -> f64 {
        self.c[0]
    }

    pub fn k_max(&self) -> usize {
        self.c.len() - 1
    }

    /// `Σ_{k=1}^{K} c_k`.
    pub fn partial_sum(&self, k: usize) -> f64 {
        self.c[1..=k.min(self.k_max())].iter().sum()
    }

    /// Value of the full series `Σ_{k≥1} c_k`.
    pub fn series_limit(&self) -> f64 {
        -0.5 * self.c0()
    }

    /// Leading-order size of the truncation remainder `Σ_{k>K} c_k`, from
    /// `c_k ≈ -2^{-α} Γ(1+α) sin(πα/2) / π · k^{-1-α}`.
    pub fn tail_estimate(&self, k: usize) -> f64 {
        let a = self.alpha.get();
        let amp = 2f64.powf(-a) * gamma(1.0 + a) * (0.5 * PI * a).sin() / PI;
        -amp * (k as f64 + 0.5).powf(-a) / a
    }
}

/// Coefficients `c_0, …, c_{k_max}` through the reciprocal gamma function.
pub fn sine_coefficients(alpha: StabilityIndex, k_max: usize) -> Result<SineCoefficients> {
    if k_max < 1 {
        return Err(Error::InvalidParameter {
            name: "k_max",
            value: k_max as f64,
            expected: "k_max >= 1",
        });
    }
    let a = alpha.get();
    let ln_front = -a * 2f64.ln() + crate::special::ln_gamma(1.0 + a);
    let half = 1.0 + 0.5 * a;
    let c = (0..=k_max)
        .map(|k| {
            let kf = k as f64;
            let (s1, l1) = signed_ln_rgamma(half - kf);
            let (s2, l2) = signed_ln_rgamma(half + kf);
            let parity = if k % 2 == 0 { 1.0 } else { -1.0 };
            parity * s1 * s2 * (ln_front + l1 + l2).exp()
        })
        .collect();
    Ok(SineCoefficients { alpha, c })
}

/// An even function `u` on ℝ, as consumed by [`alpha_sine_transform`].
pub trait EvenFunction {
    fn eval(&self, x: f64) -> f64;

    /// Half-width of the support; outside `[-s, s]` the function vanishes or
    /// is negligible. Infinite for functions with heavy tails.
    fn support(&self) -> f64;

    /// Fourier transform `∫ e^{iωx} u(x) dx`, or `None` if `u ∉ L¹`.
    fn fourier(&self, omega: f64) -> Option<f64>;

    /// Upper bound of `|Fu(ω')|` over `ω' ≥ ω`.
    fn fourier_envelope(&self, omega: f64) -> f64;

    /// Interior points where `u` is not smooth (on the positive half-line).
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Indicator of `[-a, a]`.
#[derive(Debug, Clone, Copy)]
pub struct Indicator {
    pub half_width: f64,
}

impl EvenFunction for Indicator {
    fn eval(&self, x: f64) -> f64 {
        if x.abs() <= self.half_width {
            1.0
        } else {
            0.0
        }
    }
    fn support(&self) -> f64 {
        self.half_width
    }
    fn fourier(&self, omega: f64) -> Option<f64> {
        let a = self.half_width;
        Some(if omega == 0.0 { 2.0 * a } else { 2.0 * (a * omega).sin() / omega })
    }
    fn fourier_envelope(&self, omega: f64) -> f64 {
        (2.0 * self.half_width).min(2.0 / omega.abs())
    }
}

/// Centred normal density with standard deviation `sd`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianDensity {
    pub sd: f64,
}

impl EvenFunction for GaussianDensity {
    fn eval(&self, x: f64) -> f64 {
        let z = x / self.sd;
        (-0.5 * z * z).exp() / (self.sd * (2.0 * PI).sqrt())
    }
    fn support(&self) -> f64 {
        // density below 1e-17 relative to its peak
        9.0 * self.sd
    }
    fn fourier(&self, omega: f64) -> Option<f64> {
        let z = self.sd * omega;
        Some((-0.5 * z * z).exp())
    }
    fn fourier_envelope(&self, omega: f64) -> f64 {
        let z = self.sd * omega;
        (-0.5 * z * z).exp()
    }
}

/// `|x|^{-γ}` on ℝ, the prototype of a kernel in the weighted space that is
/// not integrable.
#[derive(Debug, Clone, Copy)]
pub struct PowerLaw {
    pub exponent: f64,
}

impl EvenFunction for PowerLaw {
    fn eval(&self, x: f64) -> f64 {
        x.abs().powf(-self.exponent)
    }
    fn support(&self) -> f64 {
        f64::INFINITY
    }
    fn fourier(&self, _omega: f64) -> Option<f64> {
        None
    }
    fn fourier_envelope(&self, _omega: f64) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SineTransformMethod {
    Quadrature,
    Series,
}

/// Term magnitude at which the coefficient series is truncated.
pub const SERIES_TERM_TOLERANCE: f64 = 1e-10;
/// Hard cap on the number of series terms.
pub const SERIES_MAX_TERMS: usize = 1_000_000;

/// α-sine transform `T_α u(t) = ∫ |sin(tx)|^α u(x) dx` of an even function.
pub fn alpha_sine_transform(
    u: &dyn EvenFunction,
    t: f64,
    alpha: StabilityIndex,
    method: SineTransformMethod,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let a = alpha.get();
    let t = t.abs();
    match method {
        SineTransformMethod::Quadrature => {
            let s = u.support();
            if !s.is_finite() {
                return Err(Error::Domain(
                    "quadrature route needs a function with bounded support".into(),
                ));
            }
            // split at the zeros of sin(tx) and at the kinks of u
            let mut breaks = Vec::new();
            breaks.push(0.0);
            let step = PI / t;
            let mut x = step;
            while x < s {
                breaks.push(x);
                x += step;
            }
            breaks.extend(u.kinks().into_iter().filter(|&k| k > 0.0 && k < s));
            breaks.push(s);
            breaks.sort_by(|p, q| p.total_cmp(q));
            breaks.dedup();
            let half = integrate_pieces(
                |x: f64| (t * x).sin().abs().powf(a) * u.eval(x),
                &breaks,
                Tolerance::new(1e-15 / breaks.len() as f64, 1e-13),
            )?;
            Ok(2.0 * half.value)
        }
        SineTransformMethod::Series => {
            let f0 = u.fourier(0.0).ok_or_else(|| {
                Error::Domain("series route needs an absolutely integrable function".into())
            })?;
            let c0 = 2f64.powf(-a) * gamma(1.0 + a) / gamma(1.0 + 0.5 * a).powi(2);
            let mut sum = c0 * f0;
            let mut ck = c0;
            for k in 0..SERIES_MAX_TERMS {
                // c_{k+1} = c_k (k - α/2) / (k + 1 + α/2)
                let kf = k as f64;
                ck *= (kf - 0.5 * a) / (kf + 1.0 + 0.5 * a);
                let omega = 2.0 * (kf + 1.0) * t;
                let fu = u.fourier(omega).expect("integrable");
                sum += 2.0 * ck * fu;
                if 2.0 * ck.abs() * u.fourier_envelope(omega) < SERIES_TERM_TOLERANCE {
                    break;
                }
            }
            Ok(sum)
        }
    }
}

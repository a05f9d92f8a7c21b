//! Weight functions `w_θ`, smoothing kernels `v_θ = F⁻¹w_θ`, their
//! discretization, the valid-mode convolution that mollifies a path, and the
//! control and normalized spectral densities of the mollified process.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_range, Error, Result};
use crate::pathgen::{Generator, KernelPsi, PathMeta, PathSample, PsiShape};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::special::{gamma_p, hyp1f1, ln_gamma};
use crate::stable::StabilityIndex;

/// Default bound on `|v_θ|` outside the discretization window.
pub const DEFAULT_TAIL_EPS: f64 = 1e-6;
/// Default minimal length of a mollified path.
pub const DEFAULT_MIN_OUTPUT_LEN: usize = 16;

/// Smoothing configuration: `w(x) = |x|^p e^{-|x|^q}`, scale `θ`, `L + 1`
/// kernel points on a mesh `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub l: usize,
    pub delta: f64,
}

impl MollifierSpec {
    pub fn new(p: f64, q: f64, theta: f64, l: usize, delta: f64) -> Result<Self> {
        check_range("p", p, p >= 1.0, "[1, ∞)")?;
        check_range("q", q, q >= 1.0, "[1, ∞)")?;
        check_range("theta", theta, theta > 0.0, "(0, ∞)")?;
        check_range("delta", delta, delta > 0.0, "(0, ∞)")?;
        if l == 0 || !l.is_multiple_of(2) {
            return Err(Error::InvalidParameter {
                name: "L",
                value: l as f64,
                expected: "a positive even integer",
            });
        }
        Ok(Self { p, q, theta, l, delta })
    }

    /// Kernel `v¹` (p = q = 2).
    pub fn v1(theta: f64, l: usize, delta: f64) -> Result<Self> {
        Self::new(2.0, 2.0, theta, l, delta)
    }

    /// Kernel `v²` (p = 4, q = 2).
    pub fn v2(theta: f64, l: usize, delta: f64) -> Result<Self> {
        Self::new(4.0, 2.0, theta, l, delta)
    }

    pub fn with_theta(self, theta: f64) -> Result<Self> {
        Self::new(self.p, self.q, theta, self.l, self.delta)
    }

    /// `w_θ(x) = w(x/θ)/θ`.
    pub fn weight(&self, x: f64) -> f64 {
        weight_w(self, x)
    }

    /// `ln w_θ(x)`, finite for `x ≠ 0`.
    pub fn ln_weight(&self, x: f64) -> f64 {
        let y = (x / self.theta).abs();
        self.p * y.ln() - y.powf(self.q) - self.theta.ln()
    }
}

/// `w_θ(x) = |x/θ|^p e^{-|x/θ|^q} / θ`.
pub fn weight_w(spec: &MollifierSpec, x: f64) -> f64 {
    let y = (x / spec.theta).abs();
    y.powf(spec.p) * (-y.powf(spec.q)).exp() / spec.theta
}

fn supported_order(spec: &MollifierSpec) -> Result<u32> {
    let even = spec.p.fract() == 0.0 && (spec.p as u64).is_multiple_of(2);
    if spec.q != 2.0 || !even || spec.p > 64.0 {
        return Err(Error::UnsupportedKernel { p: spec.p, q: spec.q });
    }
    Ok(spec.p as u32)
}

/// Unscaled kernel `v = F⁻¹w` at `t`, for `q = 2` and even integer `p`.
///
/// `v_θ(t) = v(θt)` is the inverse transform of `w_θ`.
pub fn kernel_v(spec: &MollifierSpec, t: f64) -> Result<f64> {
    let p = supported_order(spec)?;
    let s = 0.25 * t * t;
    let e = (-s).exp();
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    Ok(match p {
        2 => inv_sqrt_pi / 8.0 * e * (2.0 - t * t),
        4 => inv_sqrt_pi / 32.0 * e * (12.0 - 12.0 * t * t + t.powi(4)),
        _ => kernel_v_series(spec.p, t),
    })
}

/// `v(t) = Γ((1+p)/2) e^{-t²/4} ₁F₁(-p/2; 1/2; t²/4) / (2π)`, a terminating
/// series for even `p`.
pub fn kernel_v_series(p: f64, t: f64) -> f64 {
    let s = 0.25 * t * t;
    let f = hyp1f1(-0.5 * p, 0.5, s, 1e-14, 10_000);
    (ln_gamma(0.5 * (1.0 + p)) - s).exp() * f / (2.0 * PI)
}

/// Largest `|v(u)|` over `|u| ≥ u0`.
fn kernel_tail(spec: &MollifierSpec, u0: f64) -> Result<f64> {
    // v is a polynomial times e^{-u²/4}; beyond u0 + 60 it has underflowed
    let step = 0.005;
    let mut worst = kernel_v(spec, u0)?.abs();
    let mut u = u0;
    while u < u0 + 60.0 {
        u += step;
        worst = worst.max(kernel_v(spec, u)?.abs());
    }
    Ok(worst)
}

/// Samples `v_l = v(θδ(-L/2 + l))`, `l = 0..=L`, of the scaled kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    pub spec: MollifierSpec,
    pub values: Vec<f64>,
    /// Largest `|v_θ|` outside the window, as found by the tail check.
    pub tail: f64,
}

impl DiscreteKernel {
    pub fn delta(&self) -> f64 {
        self.spec.delta
    }

    pub fn theta(&self) -> f64 {
        self.spec.theta
    }

    /// `δ Σ v_l`, a Riemann sum of `∫ v_θ = w_θ(0) = 0`.
    pub fn weighted_sum(&self) -> f64 {
        self.spec.delta * self.values.iter().sum::<f64>()
    }
}

/// Discretize `v_θ` with the default tail bound.
pub fn discretize_kernel(spec: &MollifierSpec) -> Result<DiscreteKernel> {
    discretize_kernel_with_eps(spec, DEFAULT_TAIL_EPS)
}

/// Discretize `v_θ`, requiring `|v_θ(t)| < eps` for `|t| > δL/2`.
///
/// On failure the error names the smallest adequate `θ`, found by bisection
/// (the tail is non-increasing in `θ`).
pub fn discretize_kernel_with_eps(spec: &MollifierSpec, eps: f64) -> Result<DiscreteKernel> {
    supported_order(spec)?;
    let half_window = 0.5 * spec.delta * spec.l as f64;
    let tail = kernel_tail(spec, spec.theta * half_window)?;
    if !(tail < eps) {
        let passes = |theta: f64| -> Result<bool> { Ok(kernel_tail(spec, theta * half_window)? < eps) };
        let mut lo = spec.theta;
        let mut hi = spec.theta.max(1.0);
        while !passes(hi)? {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Numerical("kernel tail bisection diverged".into()));
            }
        }
        while (hi - lo) > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            if passes(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return Err(Error::KernelTail { tail, eps, min_theta: hi });
    }
    let l2 = spec.l as f64 / 2.0;
    let values = (0..=spec.l)
        .map(|l| kernel_v(spec, spec.theta * spec.delta * (l as f64 - l2)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscreteKernel { spec: *spec, values, tail })
}

/// Valid-mode convolution `x̃_k = δ Σ_{l=0}^{L} x_{k-l} v_l`, requiring at
/// least [`DEFAULT_MIN_OUTPUT_LEN`] output samples.
pub fn mollify_path(path: &PathSample, kernel: &DiscreteKernel) -> Result<PathSample> {
    mollify_path_with_min(path, kernel, DEFAULT_MIN_OUTPUT_LEN)
}

/// Valid-mode convolution with a minimal output length `n0`.
///
/// The output has `n - L` samples. As `v` is even, `x̃_k` approximates
/// `(x * v_θ)` at `t_k - δL/2`, so the output time origin is
/// `t_0 + δL/2`.
pub fn mollify_path_with_min(path: &PathSample, kernel: &DiscreteKernel, n0: usize) -> Result<PathSample> {
    let delta = kernel.delta();
    if (path.delta - delta).abs() > 1e-12 * delta {
        return Err(Error::MeshMismatch { path: path.delta, kernel: delta });
    }
    let l = kernel.spec.l;
    let n = path.values.len();
    let required = l + n0.max(1);
    if n < required {
        return Err(Error::InsufficientLength { len: n, required });
    }
    let x = &path.values;
    let v = &kernel.values;
    let out: Vec<f64> = (l..n)
        .map(|k| {
            let mut acc = 0.0;
            for (j, &vl) in v.iter().enumerate() {
                acc += x[k - j] * vl;
            }
            delta * acc
        })
        .collect();
    let meta = PathMeta {
        generator: Generator::Mollified {
            source: alloc::boxed::Box::new(path.meta.generator.clone()),
            p: kernel.spec.p,
            q: kernel.spec.q,
            theta: kernel.spec.theta,
            l,
        },
        seed: path.meta.seed,
    };
    PathSample::new(path.t0 + 0.5 * delta * l as f64, delta, out, meta)
}

/// Normalized HFSM spectral density of the mollified process,
/// `ρ_θ(z) = (q/2) r^b / Γ(b) · e^{-r|z|^q} |z|^{α(p-H)-1}` with
/// `b = α(p-H)/q` and `r = αθ^{-q}`. `|Z|^q` is then `Γ(b, rate r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfsmDensity {
    pub alpha: f64,
    pub h: f64,
    pub p: f64,
    pub q: f64,
    pub theta: f64,
}

impl HfsmDensity {
    pub fn shape(&self) -> f64 {
        self.alpha * (self.p - self.h) / self.q
    }

    pub fn rate(&self) -> f64 {
        self.alpha * self.theta.powf(-self.q)
    }

    pub fn eval(&self, z: f64) -> f64 {
        let b = self.shape();
        let r = self.rate();
        let expo = self.alpha * (self.p - self.h) - 1.0;
        let az = z.abs();
        if az == 0.0 {
            return if expo > 0.0 {
                0.0
            } else if expo == 0.0 {
                0.5 * self.q * (b * r.ln() - ln_gamma(b)).exp()
            } else {
                f64::INFINITY
            };
        }
        let ln = (0.5 * self.q).ln() + b * r.ln() - ln_gamma(b) - r * az.powf(self.q) + expo * az.ln();
        ln.exp()
    }

    /// `P(|Z| > a)`.
    pub fn tail_mass(&self, a: f64) -> f64 {
        1.0 - gamma_p(self.shape(), self.rate() * a.abs().powf(self.q))
    }
}

/// HFSM density `ρ_θ` for shape `α(p-H)/q > 0`.
pub fn rho_hfsm(alpha: f64, h: f64, p: f64, q: f64, theta: f64) -> Result<HfsmDensity> {
    let d = HfsmDensity { alpha, h, p, q, theta };
    check_range("alpha", alpha, alpha > 0.0 && alpha <= 2.0, "(0, 2]")?;
    check_range("theta", theta, theta > 0.0, "(0, ∞)")?;
    check_range("q", q, q > 0.0, "(0, ∞)")?;
    check_range("alpha (p - H) / q", d.shape(), d.shape() > 0.0, "(0, ∞)")?;
    Ok(d)
}

/// Control density `f̃_θ = w_θ^α |Ψ|^α` of the mollified process and its
/// normalization `ρ_θ = f̃_θ / m̃_θ(ℝ)`.
///
/// The constant factor of `Ψ` is kept apart from its shape, so `ρ_θ` is
/// computed from the shape alone and does not depend on that factor.
#[derive(Debug, Clone)]
pub struct ControlDensity {
    pub alpha: StabilityIndex,
    pub spec: MollifierSpec,
    psi: KernelPsi,
    shape_mass: f64,
    /// Whether the mass was obtained in closed form (HFSM) or by quadrature.
    pub closed_form: bool,
}

impl ControlDensity {
    fn shape_density(&self, x: f64) -> f64 {
        let a = self.alpha.get();
        if x == 0.0 {
            if let PsiShape::Hfsm { h, .. } = self.psi.shape() {
                // (w_θ(x)|x|^{-H-1/α})^α ~ θ^{-α(1+p)} |x|^{α(p-H)-1} at 0
                let expo = a * (self.spec.p - h) - 1.0;
                return if expo > 0.0 {
                    0.0
                } else if expo == 0.0 {
                    self.spec.theta.powf(-a * (1.0 + self.spec.p))
                } else {
                    f64::INFINITY
                };
            }
        }
        (weight_w(&self.spec, x) * self.psi.shape_eval(x).abs()).powf(a)
    }

    /// `f̃_θ(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.psi.scale().abs().powf(self.alpha.get()) * self.shape_density(x)
    }

    /// `m̃_θ(ℝ)`.
    pub fn total_mass(&self) -> f64 {
        self.psi.scale().abs().powf(self.alpha.get()) * self.shape_mass
    }

    /// `ρ_θ(x)`.
    pub fn rho(&self, x: f64) -> f64 {
        self.shape_density(x) / self.shape_mass
    }

    pub fn psi(&self) -> &KernelPsi {
        &self.psi
    }
}

/// Closed-form `m̃_θ(ℝ) = (2/q) θ^{-α(1+p)} Γ(b) / r^b` for the HFSM kernel
/// with unit constant.
pub fn hfsm_total_mass(alpha: f64, h: f64, spec: &MollifierSpec) -> Result<f64> {
    let d = rho_hfsm(alpha, h, spec.p, spec.q, spec.theta)?;
    let b = d.shape();
    let ln = (2.0 / spec.q).ln() - alpha * (1.0 + spec.p) * spec.theta.ln() + ln_gamma(b) - b * d.rate().ln();
    Ok(ln.exp())
}

/// Build the control density of `w_θ Ψ`.
pub fn control_density(alpha: StabilityIndex, psi: &KernelPsi, spec: &MollifierSpec) -> Result<ControlDensity> {
    let a = alpha.get();
    let (shape_mass, closed_form) = match psi.shape() {
        PsiShape::Hfsm { alpha: pa, h } => {
            if (pa - a).abs() > 0.0 {
                return Err(Error::Configuration(format!(
                    "HFSM kernel built for alpha = {pa} used with alpha = {a}"
                )));
            }
            if !(a * (spec.p - h) > 0.0) {
                return Err(Error::Domain(format!("alpha (p - H) = {} is not positive", a * (spec.p - h))));
            }
            (hfsm_total_mass(a, *h, spec)?, true)
        }
        PsiShape::Custom { .. } => {
            let f = |x: f64| (weight_w(spec, x) * psi.shape_eval(x).abs()).powf(a);
            let tol = Tolerance::new(1e-300, 1e-11);
            let head = integrate(f, 0.0, spec.theta, tol)
                .map_err(|e| Error::Domain(format!("control density not integrable near 0: {e}")))?;
            let tail = integrate_to_infinity(f, spec.theta, tol)
                .map_err(|e| Error::Domain(format!("control density not integrable at infinity: {e}")))?;
            (2.0 * (head.value + tail.value), false)
        }
    };
    if !(shape_mass.is_finite() && shape_mass > 0.0) {
        return Err(Error::Domain(format!("total mass {shape_mass} is not finite and positive")));
    }
    Ok(ControlDensity { alpha, spec: *spec, psi: psi.clone(), shape_mass, closed_form })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v1(theta: f64) -> MollifierSpec {
        MollifierSpec::v1(theta, 100, 0.01).unwrap()
    }

    fn tone_path(omega: f64, n: usize, delta: f64) -> PathSample {
        let values = (0..n).map(|j| (omega * j as f64 * delta).cos()).collect();
        PathSample::new(0.0, delta, values, PathMeta::provided()).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(MollifierSpec::new(0.5, 2.0, 1.0, 100, 0.01).is_err());
        assert!(MollifierSpec::new(2.0, 2.0, 1.0, 101, 0.01).is_err());
        assert!(MollifierSpec::new(2.0, 2.0, 0.0, 100, 0.01).is_err());
        assert!(MollifierSpec::new(2.0, 0.5, 1.0, 100, 0.01).is_err());
    }

    #[test]
    fn weight_values() {
        let s = MollifierSpec::v1(1.0, 100, 0.01).unwrap();
        assert_relative_eq!(weight_w(&s, 1.0), (-1f64).exp(), epsilon = 1e-15);
        assert_eq!(weight_w(&v1(20.0), 0.0), 0.0);
        let s = MollifierSpec::v2(20.0, 100, 0.01).unwrap();
        assert_relative_eq!(weight_w(&s, 20.0), (-1f64).exp() / 20.0, epsilon = 1e-15);
        assert!((weight_w(&s, 20.0) - 0.0183940).abs() < 1e-7);
        assert_relative_eq!(s.ln_weight(7.0).exp(), weight_w(&s, 7.0), max_relative = 1e-13);
    }

    #[test]
    fn kernel_values() {
        let s = v1(20.0);
        assert_relative_eq!(kernel_v(&s, 0.0).unwrap(), 1.0 / (4.0 * PI.sqrt()), epsilon = 1e-15);
        assert!((kernel_v(&s, 0.0).unwrap() - 0.1410474).abs() < 1e-7);
        assert!(kernel_v(&s, 2f64.sqrt()).unwrap().abs() < 1e-16);
        let s2 = MollifierSpec::v2(20.0, 100, 0.01).unwrap();
        assert!((kernel_v(&s2, 0.0).unwrap() - 0.2115710).abs() < 1e-7);
        let bad = MollifierSpec::new(3.0, 2.0, 20.0, 100, 0.01).unwrap();
        assert!(matches!(kernel_v(&bad, 0.0), Err(Error::UnsupportedKernel { .. })));
        let bad = MollifierSpec::new(2.0, 3.0, 20.0, 100, 0.01).unwrap();
        assert!(matches!(kernel_v(&bad, 0.0), Err(Error::UnsupportedKernel { .. })));
    }

    #[test]
    fn kernel_series_matches_closed_forms() {
        for &t in &[0.0, 0.3, 1.0, 2.5, 6.0] {
            assert_relative_eq!(kernel_v_series(2.0, t), kernel_v(&v1(1.0), t).unwrap(), epsilon = 1e-15);
            let s2 = MollifierSpec::v2(1.0, 100, 0.01).unwrap();
            assert_relative_eq!(kernel_v_series(4.0, t), kernel_v(&s2, t).unwrap(), epsilon = 1e-15);
        }
    }

    #[test]
    fn kernel_is_inverse_transform_of_weight() {
        // oracle: v(t) = (1/π) ∫_0^∞ w(x) cos(tx) dx by adaptive quadrature
        for &p in &[2.0, 4.0, 6.0] {
            let s = MollifierSpec::new(p, 2.0, 1.0, 100, 0.01).unwrap();
            for &t in &[0.0, 0.7, 2.0, 4.5] {
                let q = integrate(|x: f64| x.powf(p) * (-x * x).exp() * (t * x).cos(), 0.0, 12.0, Tolerance::new(1e-15, 1e-13))
                    .unwrap()
                    .value
                    / PI;
                assert!((kernel_v(&s, t).unwrap() - q).abs() < 1e-12, "p {p} t {t}");
            }
        }
    }

    #[test]
    fn discretized_kernel_properties() {
        let k = discretize_kernel(&v1(20.0)).unwrap();
        assert_eq!(k.values.len(), 101);
        assert_relative_eq!(k.values[50], 1.0 / (4.0 * PI.sqrt()), epsilon = 1e-15);
        for l in 0..=100 {
            assert!((k.values[l] - k.values[100 - l]).abs() < 1e-12);
        }
        assert!(k.weighted_sum().abs() < 1e-4 / 20.0);
        assert!(k.tail < DEFAULT_TAIL_EPS);
    }

    #[test]
    fn tail_check_reports_minimal_theta() {
        let err = discretize_kernel(&v1(5.0)).unwrap_err();
        let Error::KernelTail { min_theta, .. } = err else {
            panic!("expected tail error, got {err:?}");
        };
        assert!(min_theta > 5.0 && min_theta < 20.0);
        assert!(discretize_kernel(&v1(min_theta * 1.0001)).is_ok());
        assert!(discretize_kernel(&v1(min_theta * 0.999)).is_err());
    }

    #[test]
    fn constant_path_is_annihilated() {
        let k = discretize_kernel(&v1(20.0)).unwrap();
        let c = 3.5;
        let path = PathSample::new(0.0, 0.01, alloc::vec![c; 500], PathMeta::provided()).unwrap();
        let out = mollify_path(&path, &k).unwrap();
        assert_eq!(out.values.len(), 400);
        assert!(out.values.iter().all(|x| x.abs() < c * 1e-3));
        assert_relative_eq!(out.t0, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mollify_errors() {
        let k = discretize_kernel(&v1(20.0)).unwrap();
        let p = PathSample::new(0.0, 0.02, alloc::vec![0.0; 500], PathMeta::provided()).unwrap();
        assert!(matches!(mollify_path(&p, &k), Err(Error::MeshMismatch { .. })));
        let p = PathSample::new(0.0, 0.01, alloc::vec![0.0; 110], PathMeta::provided()).unwrap();
        assert!(matches!(mollify_path(&p, &k), Err(Error::InsufficientLength { .. })));
    }

    #[test]
    fn tone_is_multiplied_by_weight() {
        let spec = v1(20.0);
        let k = discretize_kernel(&spec).unwrap();
        let mut omega = 2.0;
        while omega < PI / 0.01 {
            let out = mollify_path(&tone_path(omega, 600, 0.01), &k).unwrap();
            let w = weight_w(&spec, omega);
            for (i, &y) in out.values.iter().enumerate() {
                let t = out.t0 + i as f64 * 0.01;
                assert!((y - w * (omega * t).cos()).abs() < 1e-3 * w.max(1e-3), "omega {omega}");
            }
            if w > 1e-8 {
                // amplitude relative to w(ω) via the analytic signal on the
                // full output: least squares against cos and sin
                let (mut cc, mut cy, mut ss, mut sy) = (0.0, 0.0, 0.0, 0.0);
                for (i, &y) in out.values.iter().enumerate() {
                    let t = out.t0 + i as f64 * 0.01;
                    let (s, c) = (omega * t).sin_cos();
                    cc += c * c;
                    cy += c * y;
                    ss += s * s;
                    sy += s * y;
                }
                let amp = ((cy / cc).powi(2) + (sy / ss).powi(2)).sqrt();
                assert!((amp / w - 1.0).abs() < 1e-2, "omega {omega}: ratio {}", amp / w);
            }
            omega *= 1.3;
        }
    }

    #[test]
    fn mollify_is_linear() {
        let k = discretize_kernel(&v1(20.0)).unwrap();
        let xs: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin()).collect();
        let ys: Vec<f64> = (0..300).map(|i| (i as f64 * 0.11).cos().powi(3)).collect();
        let (a, b) = (2.5, -0.75);
        let zs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
        let m = |v: Vec<f64>| mollify_path(&PathSample::new(0.0, 0.01, v, PathMeta::provided()).unwrap(), &k).unwrap().values;
        let (mx, my, mz) = (m(xs), m(ys), m(zs));
        for i in 0..mz.len() {
            assert!((mz[i] - (a * mx[i] + b * my[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn hfsm_mass_closed_form_matches_quadrature() {
        let spec = v1(20.0);
        let closed = hfsm_total_mass(1.5, 0.75, &spec).unwrap();
        let f = |x: f64| (weight_w(&spec, x) * x.powf(-0.75 - 1.0 / 1.5)).powf(1.5);
        let tol = Tolerance::new(1e-300, 1e-12);
        let q = 2.0 * (integrate(f, 0.0, 20.0, tol).unwrap().value + integrate_to_infinity(f, 20.0, tol).unwrap().value);
        assert_relative_eq!(closed, q, max_relative = 1e-6);
        assert!((closed - 2.7e-4).abs() < 0.1e-4);
    }

    #[test]
    fn hfsm_control_density_agrees_with_rho_hfsm() {
        let a = StabilityIndex::new(1.5).unwrap();
        for &h in &[0.25, 0.75] {
            let spec = v1(20.0);
            let psi = KernelPsi::hfsm(a, h).unwrap();
            let cd = control_density(a, &psi, &spec).unwrap();
            assert!(cd.closed_form);
            let rho = rho_hfsm(1.5, h, 2.0, 2.0, 20.0).unwrap();
            for i in 1..200 {
                let z = i as f64 * 0.5;
                assert!((cd.rho(z) - rho.eval(z)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hfsm_control_density_at_origin() {
        for &(alpha, h) in &[(1.5, 0.25), (0.3, 0.9)] {
            let a = StabilityIndex::new(alpha).unwrap();
            let cd = control_density(a, &KernelPsi::hfsm(a, h).unwrap(), &v1(20.0)).unwrap();
            assert_eq!(cd.rho(0.0), rho_hfsm(alpha, h, 2.0, 2.0, 20.0).unwrap().eval(0.0));
        }
    }

    #[test]
    fn custom_psi_uses_quadrature_and_matches_closed_form() {
        let a = StabilityIndex::new(1.5).unwrap();
        let spec = v1(20.0);
        let custom = KernelPsi::custom("power", |x: f64| x.abs().powf(-0.75 - 1.0 / 1.5), true, true);
        let cd = control_density(a, &custom, &spec).unwrap();
        assert!(!cd.closed_form);
        let closed = hfsm_total_mass(1.5, 0.75, &spec).unwrap();
        assert_relative_eq!(cd.total_mass(), closed, max_relative = 1e-6);
    }

    #[test]
    fn rho_normalization() {
        let spec = v1(20.0);
        let a = StabilityIndex::new(1.5).unwrap();
        let cd = control_density(a, &KernelPsi::hfsm(a, 0.75).unwrap(), &spec).unwrap();
        let tol = Tolerance::new(1e-300, 1e-12);
        let mass = 2.0 * integrate(|z| cd.rho(z), 0.0, 200.0, tol).unwrap().value;
        assert!((1.0 - 1e-6..=1.0 + 1e-12).contains(&mass));
        for &(alpha, h) in &[(0.75, 0.75), (1.5, 0.25), (1.9, 0.5)] {
            let rho = rho_hfsm(alpha, h, 2.0, 2.0, 20.0).unwrap();
            let m = 2.0 * (integrate(|z| rho.eval(z), 0.0, 20.0, tol).unwrap().value
                + integrate_to_infinity(|z| rho.eval(z), 20.0, tol).unwrap().value);
            assert!((m - 1.0).abs() < 1e-6, "alpha {alpha} H {h}: {m}");
        }
    }

    #[test]
    fn rho_hfsm_shape_regimes() {
        let r = rho_hfsm(1.5, 0.75, 2.0, 2.0, 20.0).unwrap();
        assert_eq!(r.eval(0.0), 0.0);
        assert_eq!(r.eval(-3.7), r.eval(3.7));
        let r = rho_hfsm(0.75, 0.75, 2.0, 2.0, 20.0).unwrap();
        assert!(r.eval(0.0).is_infinite());
        assert!(r.eval(1e-8) > r.eval(1e-4));
        assert!(rho_hfsm(1.5, 2.5, 2.0, 2.0, 20.0).is_err());
        assert!((r.tail_mass(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_independent_of_psi_constant() {
        let a = StabilityIndex::new(1.5).unwrap();
        let spec = v1(20.0);
        let psi = KernelPsi::hfsm(a, 0.25).unwrap();
        let base = control_density(a, &psi, &spec).unwrap();
        for &c in &[1e-3, 0.5, 7.0, 1e4] {
            let scaled = control_density(a, &psi.scaled(c), &spec).unwrap();
            for i in 0..400 {
                let z = i as f64 * 0.25;
                assert_eq!(scaled.rho(z).to_bits(), base.rho(z).to_bits());
            }
            assert_relative_eq!(scaled.total_mass(), c.powf(1.5) * base.total_mass(), max_relative = 1e-14);
        }
    }

    #[test]
    fn non_integrable_control_density() {
        let a = StabilityIndex::new(1.5).unwrap();
        let spec = v1(20.0);
        assert!(
            control_density(a, &KernelPsi::hfsm(a, 0.75).unwrap(), &MollifierSpec::new(1.0, 2.0, 20.0, 100, 0.01).unwrap())
                .is_ok()
        );
        let bad = KernelPsi::custom("steep", |x: f64| x.abs().powf(-4.0), true, false);
        assert!(matches!(control_density(a, &bad, &spec), Err(Error::Domain(_))));
    }
}

//! Periodogram, extraction of the largest peaks as frequency estimates, and
//! kernel density estimation of the normalized spectral density.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::dft;
use crate::error::{Error, Result};
use crate::pathgen::PathSample;

/// Default number of bins cleared on each side of an extracted peak.
pub const DEFAULT_EXCLUSION_BINS: usize = 0;
/// Default number of KDE grid points.
pub const DEFAULT_KDE_POINTS: usize = 2048;

/// `I_n(θ_j) = n^{-2} |Σ_k x_k e^{-ikθ_j}|²` at `θ_j = 2πj/n`,
/// `j = 1..=⌊n/2⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    /// `ordinates[j - 1] = I_n(θ_j)`.
    pub ordinates: Vec<f64>,
    pub n: usize,
    pub delta: f64,
    /// `I_n(0)`.
    pub dc: f64,
}

impl Periodogram {
    /// Physical frequency `θ_j / δ` of bin `j` (1-based).
    pub fn frequency(&self, j: f64) -> f64 {
        2.0 * PI * j / (self.n as f64 * self.delta)
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.delta
    }

    /// Bin width `2π/(nδ)` in physical units.
    pub fn resolution(&self) -> f64 {
        self.frequency(1.0)
    }

    /// `Σ_{j=0}^{n-1} I_n(θ_j)` reassembled from the retained half
    /// spectrum; equals `n^{-1} Σ x_k²` (Parseval).
    pub fn full_spectrum_sum(&self) -> f64 {
        let mut s = self.dc;
        for (i, &v) in self.ordinates.iter().enumerate() {
            let j = i + 1;
            s += if 2 * j == self.n { v } else { 2.0 * v };
        }
        s
    }
}

/// Periodogram of a path, computed by FFT.
pub fn periodogram(path: &PathSample) -> Result<Periodogram> {
    let n = path.values.len();
    if n < 16 {
        return Err(Error::InsufficientLength { len: n, required: 16 });
    }
    if let Some(i) = path.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut buf: Vec<Complex64> = path.values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    dft::forward(&mut buf);
    let norm = 1.0 / (n as f64 * n as f64);
    let ordinates = buf[1..=n / 2].iter().map(|c| c.norm_sqr() * norm).collect();
    Ok(Periodogram { ordinates, n, delta: path.delta, dc: buf[0].norm_sqr() * norm })
}

/// Extracted peak locations `Ẑ_k` (positive, physical units) in the order
/// of selection, which is by decreasing periodogram height.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEstimates {
    pub freqs: Vec<f64>,
    /// Selected bin of each peak (1-based Fourier index).
    pub bins: Vec<usize>,
    /// Periodogram ordinate at the selected bin.
    pub heights: Vec<f64>,
    pub nyquist: f64,
    pub exclusion_bins: usize,
}

impl FrequencyEstimates {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Wrap externally known frequencies (absolute values are taken).
    pub fn from_values(freqs: &[f64], nyquist: f64) -> Self {
        Self {
            freqs: freqs.iter().map(|z| z.abs()).collect(),
            bins: Vec::new(),
            heights: Vec::new(),
            nyquist,
            exclusion_bins: 0,
        }
    }
}

/// Greedy extraction of the `n_peaks` largest periodogram peaks.
///
/// Each round takes the largest remaining ordinate, refines its location by
/// a parabola through the logarithms of the three ordinates around it, and
/// removes `exclusion_bins` bins on each side from further selection.
pub fn extract_peaks(pg: &Periodogram, n_peaks: usize, exclusion_bins: usize) -> Result<FrequencyEstimates> {
    let m = pg.ordinates.len();
    let needed = n_peaks * (2 * exclusion_bins + 1);
    if n_peaks == 0 || needed > m {
        return Err(Error::Capacity { requested: n_peaks, exclusion: exclusion_bins, needed, available: m });
    }
    let ord = &pg.ordinates;
    let mut available = vec![true; m];
    let mut freqs = Vec::with_capacity(n_peaks);
    let mut bins = Vec::with_capacity(n_peaks);
    let mut heights = Vec::with_capacity(n_peaks);
    for _ in 0..n_peaks {
        let mut best: Option<usize> = None;
        for i in 0..m {
            if available[i] && best.is_none_or(|b| ord[i] > ord[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else {
            return Err(Error::Capacity { requested: n_peaks, exclusion: exclusion_bins, needed, available: m });
        };
        let mut offset = 0.0;
        if i > 0 && i + 1 < m && ord[i - 1] > 0.0 && ord[i] > 0.0 && ord[i + 1] > 0.0 {
            // log-ratios keep the offset exact under power-of-two scaling
            let (a, c) = ((ord[i - 1] / ord[i]).ln(), (ord[i + 1] / ord[i]).ln());
            let curv = a + c;
            if curv < 0.0 {
                offset = (0.5 * (a - c) / curv).clamp(-0.5, 0.5);
            }
        }
        let j = (i + 1) as f64 + offset;
        freqs.push(pg.frequency(j).clamp(f64::MIN_POSITIVE, pg.nyquist()));
        bins.push(i + 1);
        heights.push(ord[i]);
        let lo = i.saturating_sub(exclusion_bins);
        let hi = (i + exclusion_bins).min(m - 1);
        available[lo..=hi].iter_mut().for_each(|a| *a = false);
    }
    Ok(FrequencyEstimates { freqs, bins, heights, nyquist: pg.nyquist(), exclusion_bins })
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `h = 0.9 min(sd, IQR/1.34) N^{-1/5}`; when the IQR
/// vanishes for non-constant data the standard deviation is used alone.
pub fn silverman_bandwidth(data: &[f64]) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("{n} observations")));
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let sd = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("constant data".into()));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Estimate of an even density on the half-line, on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub n_used: usize,
}

impl DensityEstimate {
    /// Trapezoid integral over the grid.
    pub fn trapezoid(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Linear interpolation; 0 outside the grid.
    pub fn interpolate(&self, z: f64) -> f64 {
        interpolate(&self.grid, &self.values, z)
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

pub(crate) fn interpolate(x: &[f64], y: &[f64], z: f64) -> f64 {
    if x.is_empty() || z < x[0] || z > x[x.len() - 1] {
        return 0.0;
    }
    let i = x.partition_point(|&g| g <= z);
    if i == 0 {
        return y[0];
    }
    if i == x.len() {
        return y[x.len() - 1];
    }
    let t = (z - x[i - 1]) / (x[i] - x[i - 1]);
    y[i - 1] + t * (y[i] - y[i - 1])
}

/// `points` equispaced values on `[0, z_max]`.
pub fn uniform_grid(z_max: f64, points: usize) -> Vec<f64> {
    let step = z_max / (points - 1) as f64;
    (0..points).map(|i| i as f64 * step).collect()
}

/// Half-line kernel density estimate
/// `ρ̂(x) = (2Nh)^{-1} Σ_k κ((x - Ẑ_k)/h)` with a Gaussian `κ`; the
/// bandwidth defaults to Silverman's rule on the frequencies.
pub fn kde(freqs: &FrequencyEstimates, grid: &[f64], bandwidth: Option<f64>) -> Result<DensityEstimate> {
    let z = &freqs.freqs;
    if z.is_empty() {
        return Err(Error::Degenerate("no frequencies".into()));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] < 0.0 {
        return Err(Error::Configuration("KDE grid must be increasing and non-negative".into()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidParameter { name: "bandwidth", value: h, expected: "(0, ∞)" }),
        None => silverman_bandwidth(z)?,
    };
    let norm = 1.0 / (2.0 * z.len() as f64 * h * (2.0 * PI).sqrt());
    let values = grid
        .iter()
        .map(|&x| {
            norm * z
                .iter()
                .map(|&zk| {
                    let u = (x - zk) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(DensityEstimate { grid: grid.to_vec(), values, bandwidth: h, n_used: z.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathgen::PathMeta;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn path(values: Vec<f64>, delta: f64) -> PathSample {
        PathSample::new(0.0, delta, values, PathMeta::provided()).unwrap()
    }

    #[test]
    fn on_grid_tone() {
        let n = 256;
        let m = 17;
        let x = (0..n).map(|k| (2.0 * PI * (m * k) as f64 / n as f64).cos()).collect();
        let pg = periodogram(&path(x, 1.0)).unwrap();
        assert_eq!(pg.ordinates.len(), 128);
        for (i, &v) in pg.ordinates.iter().enumerate() {
            if i + 1 == m {
                assert_relative_eq!(v, 0.25, epsilon = 1e-14);
            } else {
                assert!(v < 1e-28);
            }
        }
    }

    #[test]
    fn zero_path_and_errors() {
        let pg = periodogram(&path(vec![0.0; 64], 0.1)).unwrap();
        assert!(pg.ordinates.iter().all(|&v| v == 0.0));
        assert!(periodogram(&path(vec![0.0; 8], 0.1)).is_err());
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &n in &[64usize, 101, 1000] {
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ms = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let pg = periodogram(&path(x, 0.5)).unwrap();
            assert!((pg.full_spectrum_sum() - ms).abs() < 1e-10 * ms.max(1.0));
        }
    }

    #[test]
    fn scaling_multiplies_ordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..512).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = path(x, 0.01);
        let a = periodogram(&p).unwrap();
        let b = periodogram(&p.scaled(8.0)).unwrap();
        for (u, v) in a.ordinates.iter().zip(&b.ordinates) {
            assert_eq!((64.0 * u).to_bits(), v.to_bits());
        }
    }

    #[test]
    fn ordering_by_height() {
        let n = 1024;
        let x = (0..n)
            .map(|k| {
                let t = k as f64 / n as f64;
                (2.0 * PI * 50.0 * t).cos() + 2.0 * (2.0 * PI * 200.0 * t).cos()
            })
            .collect();
        let pg = periodogram(&path(x, 1.0)).unwrap();
        let est = extract_peaks(&pg, 2, 4).unwrap();
        assert_eq!(est.bins, vec![200, 50]);
        assert!(est.heights[0] > est.heights[1]);
    }

    #[test]
    fn off_grid_tone_within_one_bin() {
        let (n, delta) = (10_000, 0.01);
        for &lambda in &[3.3, 17.77, 123.456] {
            let x = (0..n).map(|k| (lambda * k as f64 * delta + 0.4).cos()).collect();
            let pg = periodogram(&path(x, delta)).unwrap();
            let est = extract_peaks(&pg, 1, 4).unwrap();
            assert!((est.freqs[0] - lambda).abs() <= pg.resolution());
        }
    }

    #[test]
    fn capacity_and_separation() {
        let pg = periodogram(&path((0..64).map(|k| (k as f64).sin()).collect(), 1.0)).unwrap();
        assert!(matches!(extract_peaks(&pg, 4, 4), Err(Error::Capacity { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pg = periodogram(&path(x, 0.01)).unwrap();
        let est = extract_peaks(&pg, 100, 4).unwrap();
        let mut b = est.bins.clone();
        b.sort();
        assert!(b.windows(2).all(|w| w[1] - w[0] > 4));
        assert!(est.freqs.iter().all(|&f| f > 0.0 && f <= pg.nyquist()));
        assert!(est.heights.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn silverman_cases() {
        assert!(silverman_bandwidth(&[1.0, 1.0]).is_err());
        assert!(silverman_bandwidth(&[1.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h = silverman_bandwidth(&x).unwrap();
        assert!((h - 0.09).abs() < 0.002, "h = {h}");
        let y: Vec<f64> = x.iter().map(|v| 10.0 * v).collect();
        assert_relative_eq!(silverman_bandwidth(&y).unwrap(), 10.0 * h, max_relative = 1e-12);
        // iqr / 1.34 branch
        let d = [0.0, 1.0, 2.0, 3.0, 100.0];
        let sorted = d.to_vec();
        let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
        assert_relative_eq!(silverman_bandwidth(&d).unwrap(), 0.9 * iqr / 1.34 * 5f64.powf(-0.2), max_relative = 1e-14);
    }

    #[test]
    fn kde_single_point_and_mass() {
        let f = FrequencyEstimates::from_values(&[5.0], 100.0);
        let grid = uniform_grid(20.0, 2001);
        let d = kde(&f, &grid, Some(1.0)).unwrap();
        assert!((d.interpolate(5.0) - 0.5 / (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((0.5 / (2.0 * PI).sqrt() - 0.19947).abs() < 1e-5);
        assert!((d.trapezoid() - 0.5).abs() < 1e-6);
        assert!(kde(&FrequencyEstimates::from_values(&[], 1.0), &grid, None).is_err());
        assert!(kde(&f, &grid, Some(0.0)).is_err());
    }

    #[test]
    fn interpolation_and_trapezoid() {
        let x = [0.0, 1.0, 3.0];
        let y = [0.0, 2.0, 6.0];
        assert_eq!(interpolate(&x, &y, 2.0), 4.0);
        assert_eq!(interpolate(&x, &y, 3.5), 0.0);
        assert_eq!(trapezoid(&x, &y), 1.0 + 8.0);
    }
}

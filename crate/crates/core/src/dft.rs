//! Forward discrete Fourier transform `y_j = Σ_k x_k e^{-2πi jk/n}`.
//!
//! With the `std` feature the transform is delegated to `rustfft`; without it
//! a direct `O(n²)` evaluation is used.

use alloc::vec::Vec;

use num_complex::Complex64;

/// Forward DFT in place.
pub fn forward(buf: &mut [Complex64]) {
    #[cfg(feature = "std")]
    {
        let mut planner = rustfft::FftPlanner::<f64>::new();
        planner.plan_fft_forward(buf.len()).process(buf);
    }
    #[cfg(not(feature = "std"))]
    {
        let out = direct(buf, -1.0);
        buf.copy_from_slice(&out);
    }
}

/// Inverse DFT without the `1/n` factor: `y_j = Σ_k x_k e^{+2πi jk/n}`.
pub fn inverse_unnormalized(buf: &mut [Complex64]) {
    #[cfg(feature = "std")]
    {
        let mut planner = rustfft::FftPlanner::<f64>::new();
        planner.plan_fft_inverse(buf.len()).process(buf);
    }
    #[cfg(not(feature = "std"))]
    {
        let out = direct(buf, 1.0);
        buf.copy_from_slice(&out);
    }
}

/// Direct evaluation with exponent sign `sign`.
pub fn direct(x: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = x.len();
    let step = sign * 2.0 * core::f64::consts::PI / n as f64;
    // twiddles by exact index reduction so large n keeps full accuracy
    let tw: Vec<Complex64> = (0..n).map(|r| Complex64::from_polar(1.0, step * r as f64)).collect();
    (0..n)
        .map(|j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &xk) in x.iter().enumerate() {
                acc += xk * tw[(j * k) % n];
            }
            acc
        })
        .collect()
}

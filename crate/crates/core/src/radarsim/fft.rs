//! Unitary (`1/√N`) FFT on top of `rustfft`, plus shift and window helpers.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward DFT `X[k] = N^{-1/2} Σ_n x[n]·e^{-2πi·kn/N}`, in place.
pub fn fft_unitary(buf: &mut [Complex64]) -> Result<()> {
    let n = buf.len();
    if !n.is_power_of_two() {
        return Err(Error::Config(format!("FFT length {n} is not a power of two")));
    }
    if n == 1 {
        return Ok(());
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(buf);
    let s = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= s;
    }
    Ok(())
}

/// Rotates so that index 0 (zero frequency) lands at `N/2`.
pub fn fftshift<T: Clone>(buf: &mut [T]) {
    let n = buf.len();
    buf.rotate_right(n / 2);
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

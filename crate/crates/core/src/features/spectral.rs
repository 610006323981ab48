//! Relative band power from a single rectangular-window FFT.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub name: &'static str,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

/// Bands are half-open `[lo, hi)` except the last, which includes 40 Hz.
pub const BANDS: [Band; 5] = [
    Band { name: "delta", lo_hz: 0.5, hi_hz: 4.0 },
    Band { name: "theta", lo_hz: 4.0, hi_hz: 7.0 },
    Band { name: "alpha", lo_hz: 7.0, hi_hz: 12.0 },
    Band { name: "beta", lo_hz: 12.0, hi_hz: 30.0 },
    Band { name: "gamma", lo_hz: 30.0, hi_hz: 40.0 },
];

/// Magnitude spectrum `|X[k]|` for `k = 0..=n/2`.
pub fn magnitude_spectrum<T: Real>(x: &[T]) -> Vec<T> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft.process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm()).collect()
}

/// Share of spectral magnitude falling in each of [`BANDS`], relative to the
/// total over 0.5–40 Hz. An all-zero spectrum yields uniform shares.
pub fn band_power<T: Real>(x: &[T], fs: f64) -> [T; 5] {
    let spec = magnitude_spectrum(x);
    let n = x.len() as f64;
    let mut mass = [T::zero(); 5];
    for (k, &m) in spec.iter().enumerate() {
        let f = k as f64 * fs / n;
        for (b, band) in BANDS.iter().enumerate() {
            let last = b + 1 == BANDS.len();
            if f >= band.lo_hz && (f < band.hi_hz || (last && f <= band.hi_hz)) {
                mass[b] = mass[b] + m;
                break;
            }
        }
    }
    let total: T = mass.iter().copied().sum();
    if !(total > T::zero()) {
        return [T::lit(0.2); 5];
    }
    mass.map(|m| m / total)
}

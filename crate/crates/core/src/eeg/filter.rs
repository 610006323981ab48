//! Butterworth second-order sections and zero-phase (forward-backward) filtering.
//!
//! Designs are computed in `f64` through the bilinear transform with
//! frequency prewarping; coefficients are then cast to the working scalar.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum FilterDesignError {
    #[error("cutoff {cutoff} Hz invalid for sample rate {fs} Hz")]
    Cutoff { cutoff: f64, fs: f64 },
    #[error("sample rate {0} Hz below the 200 Hz minimum")]
    SampleRate(f64),
    #[error("filter order must be positive and even, got {0}")]
    Order(usize),
}

/// Normalized biquad: `y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad<T> {
    pub b: [T; 3],
    pub a: [T; 2],
}

impl<T: Real> Biquad<T> {
    fn dc_gain(&self) -> T {
        (self.b[0] + self.b[1] + self.b[2]) / (T::one() + self.a[0] + self.a[1])
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64, fs: f64) -> f64 {
        let w = std::f64::consts::TAU * freq_hz / fs;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0].as_f64() + self.b[1].as_f64() * z1 + self.b[2].as_f64() * z2;
        let den = 1.0 + self.a[0].as_f64() * z1 + self.a[1].as_f64() * z2;
        (num / den).norm()
    }

    fn cast<U: Real>(&self) -> Biquad<U> {
        Biquad {
            b: self.b.map(|v| U::lit(v.as_f64())),
            a: self.a.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos<T> {
    pub sections: Vec<Biquad<T>>,
}

impl<T: Real> Sos<T> {
    pub fn gain_at(&self, freq_hz: f64, fs: f64) -> f64 {
        self.sections.iter().map(|s| s.gain_at(freq_hz, fs)).product()
    }

    pub fn chain(mut self, other: Sos<T>) -> Sos<T> {
        self.sections.extend(other.sections);
        self
    }

    pub fn cast<U: Real>(&self) -> Sos<U> {
        Sos { sections: self.sections.iter().map(Biquad::cast).collect() }
    }

    /// Causal filtering with the given initial states.
    fn run(&self, x: &mut [T], init: Option<&[[T; 2]]>) {
        for (k, sec) in self.sections.iter().enumerate() {
            let [b0, b1, b2] = sec.b;
            let [a1, a2] = sec.a;
            let (mut z1, mut z2) = match init {
                Some(zi) => (zi[k][0], zi[k][1]),
                None => (T::zero(), T::zero()),
            };
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
        }
    }

    /// Steady-state section states for a constant input `x0`.
    fn steady_state(&self, x0: T) -> Vec<[T; 2]> {
        let mut level = x0;
        self.sections
            .iter()
            .map(|sec| {
                let g = sec.dc_gain();
                let y = g * level;
                let z2 = sec.b[2] * level - sec.a[1] * y;
                let z1 = sec.b[1] * level - sec.a[0] * y + z2;
                level = y;
                [z1, z2]
            })
            .collect()
    }

    /// Forward-backward filtering with odd-symmetric edge extension and
    /// steady-state initial conditions. The result has zero phase and the
    /// squared magnitude response of the cascade.
    pub fn filtfilt(&self, x: &[T], padlen: usize) -> Vec<T> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = padlen.min(n - 1);
        let two = T::lit(2.0);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(two * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(two * x[n - 1] - x[n - 1 - i]);
        }
        let zi = self.steady_state(ext[0]);
        self.run(&mut ext, Some(&zi));
        ext.reverse();
        let zi = self.steady_state(ext[0]);
        self.run(&mut ext, Some(&zi));
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (std::f64::consts::PI * f / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

fn butter_prototype(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Pairs conjugate digital poles with a fixed zero pair per section and
/// normalizes each section to unit gain at `norm_z` (1 for DC, -1 for Nyquist).
fn sections_from(poles: &[Complex64], zeros: &[Complex64], norm_z: Complex64) -> Sos<f64> {
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 0.0).collect();
    upper.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut zup: Vec<Complex64> = zeros.iter().copied().filter(|z| z.im >= 0.0).collect();
    zup.sort_by(|a, b| a.re.total_cmp(&b.re));
    let sections = upper
        .iter()
        .zip(zup.iter().cycle())
        .map(|(p, z)| {
            let b = [1.0, -2.0 * z.re, z.norm_sqr()];
            let a = [-2.0 * p.re, p.norm_sqr()];
            let zinv = norm_z.inv();
            let num = b[0] + b[1] * zinv + b[2] * zinv * zinv;
            let den = 1.0 + a[0] * zinv + a[1] * zinv * zinv;
            let g = (den / num).norm();
            Biquad { b: [b[0] * g, b[1] * g, b[2] * g], a }
        })
        .collect();
    Sos { sections }
}

fn check(order: usize, fs: f64, cutoffs: &[f64]) -> Result<(), FilterDesignError> {
    if order == 0 || order % 2 == 1 {
        return Err(FilterDesignError::Order(order));
    }
    for &c in cutoffs {
        if !(c > 0.0 && c < fs / 2.0) {
            return Err(FilterDesignError::Cutoff { cutoff: c, fs });
        }
    }
    Ok(())
}

pub fn butter_lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<Sos<f64>, FilterDesignError> {
    check(order, fs, &[cutoff_hz])?;
    let wc = prewarp(cutoff_hz, fs);
    let poles: Vec<_> = butter_prototype(order).into_iter().map(|p| bilinear(p * wc, fs)).collect();
    let zeros = vec![Complex64::new(-1.0, 0.0); order];
    Ok(sections_from(&poles, &zeros, Complex64::new(1.0, 0.0)))
}

pub fn butter_highpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<Sos<f64>, FilterDesignError> {
    check(order, fs, &[cutoff_hz])?;
    let wc = prewarp(cutoff_hz, fs);
    let poles: Vec<_> = butter_prototype(order).into_iter().map(|p| bilinear(wc / p, fs)).collect();
    let zeros = vec![Complex64::new(1.0, 0.0); order];
    Ok(sections_from(&poles, &zeros, Complex64::new(-1.0, 0.0)))
}

/// Band-stop of prototype order `order` (the digital filter has `2 * order` poles).
pub fn butter_bandstop(order: usize, lo_hz: f64, hi_hz: f64, fs: f64) -> Result<Sos<f64>, FilterDesignError> {
    check(order, fs, &[lo_hz, hi_hz])?;
    if lo_hz >= hi_hz {
        return Err(FilterDesignError::Cutoff { cutoff: lo_hz, fs });
    }
    let (w1, w2) = (prewarp(lo_hz, fs), prewarp(hi_hz, fs));
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;
    let mut poles = Vec::with_capacity(2 * order);
    for p in butter_prototype(order) {
        let half = bw / (2.0 * p);
        let disc = (half * half - w0 * w0).sqrt();
        poles.push(bilinear(half + disc, fs));
        poles.push(bilinear(half - disc, fs));
    }
    let zd = bilinear(Complex64::new(0.0, w0), fs);
    let zeros: Vec<Complex64> = (0..order).flat_map(|_| [zd, zd.conj()]).collect();
    Ok(sections_from(&poles, &zeros, Complex64::new(1.0, 0.0)))
}

/// Cutoffs of the cleaning chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub highpass_hz: f64,
    pub notch_lo_hz: f64,
    pub notch_hi_hz: f64,
    pub lowpass_hz: f64,
    pub order: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { highpass_hz: 1.0, notch_lo_hz: 48.0, notch_hi_hz: 52.0, lowpass_hz: 40.0, order: 4 }
    }
}

impl FilterConfig {
    /// High-pass, band-stop and low-pass sections as one cascade.
    pub fn design(&self, fs: f64) -> Result<Sos<f64>, FilterDesignError> {
        if fs < 200.0 {
            return Err(FilterDesignError::SampleRate(fs));
        }
        Ok(butter_highpass(self.order, self.highpass_hz, fs)?
            .chain(butter_bandstop(self.order, self.notch_lo_hz, self.notch_hi_hz, fs)?)
            .chain(butter_lowpass(self.order, self.lowpass_hz, fs)?))
    }
}

/// Edge extension length: three times the cascade order, but at least one second.
pub fn default_padlen(n_sections: usize, fs: f64) -> usize {
    (3 * (2 * n_sections + 1)).max(fs.round() as usize)
}

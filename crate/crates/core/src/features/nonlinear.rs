//! Fractal, complexity and moment descriptors of a single channel.

use super::FeatureError;
use crate::num::{variance, Real};

/// Petrosian fractal dimension, with `Nδ` the number of sign changes of the
/// first difference.
pub fn petrosian_fd<T: Real>(x: &[T]) -> Result<T, FeatureError> {
    let n = x.len();
    if n < 3 {
        return Err(FeatureError::TooFewPoints(format!("petrosian needs 3 samples, got {n}")));
    }
    let mut changes = 0usize;
    let mut prev = x[1] - x[0];
    for w in x[1..].windows(2) {
        let d = w[1] - w[0];
        if d * prev < T::zero() {
            changes += 1;
        }
        prev = d;
    }
    let nf = n as f64;
    let ln = nf.log10();
    Ok(T::lit(ln / (ln + (nf / (nf + 0.4 * changes as f64)).log10())))
}

fn diff<T: Real>(x: &[T]) -> Vec<T> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Hjorth mobility and complexity. A signal whose first difference is
/// constant has mobility from that difference and complexity 0.
pub fn hjorth<T: Real>(x: &[T]) -> Result<(T, T), FeatureError> {
    if x.len() < 3 {
        return Err(FeatureError::TooFewPoints(format!("hjorth needs 3 samples, got {}", x.len())));
    }
    let v0 = variance(x);
    if !(v0 > T::zero()) {
        return Err(FeatureError::DegenerateSignal);
    }
    let d1 = diff(x);
    let d2 = diff(&d1);
    let v1 = variance(&d1);
    let v2 = variance(&d2);
    let mobility = (v1 / v0).sqrt();
    let complexity = if v1 > T::zero() { (v2 / v1).sqrt() / mobility } else { T::zero() };
    Ok((mobility, complexity))
}

/// Least-squares slope of `y` on `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Higuchi fractal dimension over `k = 1..=kmax`.
pub fn higuchi_fd<T: Real>(x: &[T], kmax: usize) -> Result<T, FeatureError> {
    let n = x.len();
    if kmax < 2 {
        return Err(FeatureError::TooFewPoints(format!("higuchi needs kmax >= 2, got {kmax}")));
    }
    if n <= kmax {
        return Err(FeatureError::TooFewPoints(format!("higuchi needs more than {kmax} samples, got {n}")));
    }
    let mut lnk = Vec::with_capacity(kmax);
    let mut lnl = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let mut acc = 0.0;
        let mut used = 0usize;
        for m in 0..k {
            let steps = (n - m - 1) / k;
            if steps == 0 {
                continue;
            }
            let mut len = T::zero();
            for i in 1..=steps {
                len = len + (x[m + i * k] - x[m + (i - 1) * k]).abs();
            }
            let norm = (n - 1) as f64 / (steps * k) as f64;
            acc += len.as_f64() * norm / k as f64;
            used += 1;
        }
        let l = acc / used as f64;
        if !(l > 0.0) {
            return Err(FeatureError::DegenerateSignal);
        }
        lnk.push((1.0 / k as f64).ln());
        lnl.push(l.ln());
    }
    Ok(T::lit(slope(&lnk, &lnl)))
}

/// Integer window sizes log-spaced between 4 and `n / 4`. When that range
/// holds fewer than three distinct sizes the upper end is raised to `n / 2`.
pub fn dfa_default_windows(n: usize) -> Vec<usize> {
    let build = |hi: usize| -> Vec<usize> {
        if hi < 4 {
            return Vec::new();
        }
        let points = 12;
        let (l0, l1) = (4f64.ln(), (hi as f64).ln());
        let mut out: Vec<usize> = (0..points)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp().round() as usize)
            .collect();
        out.dedup();
        out
    };
    let w = build(n / 4);
    if w.len() >= 3 {
        w
    } else {
        build(n / 2)
    }
}

/// Detrended fluctuation analysis exponent.
pub fn dfa_alpha<T: Real>(x: &[T], windows: &[usize]) -> Result<T, FeatureError> {
    let n = x.len();
    let sizes: Vec<usize> = windows.iter().copied().filter(|&w| w >= 3 && w <= n).collect();
    if sizes.len() < 3 {
        return Err(FeatureError::TooFewPoints(format!("dfa needs 3 window sizes, got {}", sizes.len())));
    }
    let m = x.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let mut y = Vec::with_capacity(n);
    let mut acc = 0.0;
    for v in x {
        acc += v.as_f64() - m;
        y.push(acc);
    }
    let mut lx = Vec::with_capacity(sizes.len());
    let mut ly = Vec::with_capacity(sizes.len());
    for &w in &sizes {
        let segs = n / w;
        let wf = w as f64;
        let tm = (wf - 1.0) / 2.0;
        let stt = wf * (wf * wf - 1.0) / 12.0;
        let mut sq = 0.0;
        for s in 0..segs {
            let seg = &y[s * w..(s + 1) * w];
            let ym = seg.iter().sum::<f64>() / wf;
            let sty: f64 = seg.iter().enumerate().map(|(i, v)| (i as f64 - tm) * (v - ym)).sum();
            let b = sty / stt;
            sq += seg
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let r = v - ym - b * (i as f64 - tm);
                    r * r
                })
                .sum::<f64>();
        }
        let f = (sq / (segs * w) as f64).sqrt();
        if !(f > 0.0) {
            return Err(FeatureError::DegenerateSignal);
        }
        lx.push(wf.ln());
        ly.push(f.ln());
    }
    Ok(T::lit(slope(&lx, &ly)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub skewness: T,
    /// Excess (Fisher) kurtosis.
    pub kurtosis: T,
    pub min: T,
    pub max: T,
    /// Population standard deviation.
    pub std: T,
}

pub fn moments_minmaxstd<T: Real>(x: &[T]) -> Result<Moments<T>, FeatureError> {
    if x.is_empty() {
        return Err(FeatureError::TooFewPoints("empty signal".into()));
    }
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let (mut m2, mut m3, mut m4) = (T::zero(), T::zero(), T::zero());
    let (mut lo, mut hi) = (x[0], x[0]);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 = m2 + d2;
        m3 = m3 + d2 * d;
        m4 = m4 + d2 * d2;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    m2 = m2 / n;
    m3 = m3 / n;
    m4 = m4 / n;
    if !(m2 > T::zero()) {
        return Err(FeatureError::DegenerateSignal);
    }
    Ok(Moments {
        skewness: m3 / m2.powf(T::lit(1.5)),
        kurtosis: m4 / (m2 * m2) - T::lit(3.0),
        min: lo,
        max: hi,
        std: m2.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating(n: usize) -> Vec<f64> {
        (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
    }

    #[test]
    fn petrosian_ramp_is_one() {
        let x: Vec<f64> = (0..500).map(|i| i as f64).collect();
        assert_eq!(petrosian_fd(&x).unwrap(), 1.0);
    }

    #[test]
    fn petrosian_alternating_matches_formula() {
        let want = 3.0 / (3.0 + (1000.0f64 / (1000.0 + 0.4 * 998.0)).log10());
        assert!((petrosian_fd(&alternating(1000)).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn hjorth_sine() {
        let x: Vec<f64> = (0..5000).map(|i| (std::f64::consts::TAU * 10.0 * i as f64 / 500.0).sin()).collect();
        let (mob, comp) = hjorth(&x).unwrap();
        let want = 2.0 * (std::f64::consts::PI * 10.0 / 500.0).sin();
        assert!((mob - want).abs() / want < 0.01);
        assert!((comp - 1.0).abs() < 0.01);
        assert_eq!(hjorth(&[3.0; 10]), Err(FeatureError::DegenerateSignal));
    }

    #[test]
    fn higuchi_line_and_guard() {
        let x: Vec<f64> = (0..1000).map(|i| 0.3 * i as f64).collect();
        assert!((higuchi_fd(&x, 8).unwrap() - 1.0).abs() < 0.02);
        assert!(higuchi_fd(&x, 1).is_err());
    }

    #[test]
    fn dfa_window_guard() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        assert!(dfa_alpha(&x, &[4, 8]).is_err());
        assert!(dfa_default_windows(16).len() >= 3);
        assert!(dfa_default_windows(5000).len() >= 6);
        let w = dfa_default_windows(5000);
        assert_eq!((w[0], *w.last().unwrap()), (4, 1250));
    }

    #[test]
    fn moments_alternating() {
        let m = moments_minmaxstd(&alternating(1000)).unwrap();
        assert!(m.skewness.abs() < 1e-12);
        assert!((m.kurtosis + 2.0).abs() < 1e-12);
        assert_eq!((m.min, m.max), (-1.0, 1.0));
        assert!((m.std - 1.0).abs() < 1e-12);
        assert_eq!(moments_minmaxstd(&[1.0f32; 4]), Err(FeatureError::DegenerateSignal));
    }
}

//! Bad-channel detection by neighbour correlation and spherical-spline repair.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::filter::{butter_highpass, default_padlen};
use super::{EegError, EegMatrix};
use crate::linalg;
use crate::num::{pearson, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BadChannelConfig {
    /// A channel whose best absolute correlation with any other channel falls
    /// below this value is flagged in that window.
    pub min_correlation: f64,
    pub window_s: f64,
    /// Channel is bad when flagged in more than this fraction of windows.
    pub bad_fraction: f64,
    /// High-pass applied before correlating; `0` disables it.
    pub highpass_hz: f64,
}

impl Default for BadChannelConfig {
    fn default() -> Self {
        BadChannelConfig { min_correlation: 0.8, window_s: 4.0, bad_fraction: 0.5, highpass_hz: 1.0 }
    }
}

/// Indices of channels that fail the correlation criterion.
pub fn detect_bad_channels<T: Real>(x: &EegMatrix<T>, cfg: &BadChannelConfig) -> Result<Vec<usize>, EegError> {
    let nc = x.n_channels();
    let ns = x.n_samples();
    if nc < 2 || ns == 0 {
        return Ok(if nc == 1 { vec![0] } else { Vec::new() });
    }
    let data: Array2<T> = if cfg.highpass_hz > 0.0 {
        let sos = butter_highpass(4, cfg.highpass_hz, x.sample_rate_hz)?.cast::<T>();
        let pad = default_padlen(sos.sections.len(), x.sample_rate_hz);
        let mut out = Array2::zeros((nc, ns));
        for (c, row) in x.data.axis_iter(Axis(0)).enumerate() {
            let y = sos.filtfilt(&row.to_vec(), pad);
            out.row_mut(c).assign(&ndarray::Array1::from(y));
        }
        out
    } else {
        x.data.clone()
    };

    let win = ((cfg.window_s * x.sample_rate_hz).round() as usize).clamp(1, ns);
    let n_windows = (ns / win).max(1);
    let mut flagged = vec![0usize; nc];
    for w in 0..n_windows {
        let lo = w * win;
        let hi = if w + 1 == n_windows { ns } else { lo + win };
        let rows: Vec<Vec<T>> = (0..nc).map(|c| data.row(c).slice(ndarray::s![lo..hi]).to_vec()).collect();
        let mut best = vec![0.0f64; nc];
        for i in 0..nc {
            for j in (i + 1)..nc {
                let r = pearson(&rows[i], &rows[j]).map(|r| r.abs().as_f64()).unwrap_or(0.0);
                best[i] = best[i].max(r);
                best[j] = best[j].max(r);
            }
        }
        for c in 0..nc {
            if best[c] < cfg.min_correlation {
                flagged[c] += 1;
            }
        }
    }
    Ok((0..nc).filter(|&c| flagged[c] as f64 > cfg.bad_fraction * n_windows as f64).collect())
}

/// Spline order and Legendre truncation of the spherical interpolant.
pub const SPLINE_ORDER: i32 = 4;
pub const LEGENDRE_TERMS: usize = 7;
pub const SPLINE_RIDGE: f64 = 1e-5;

/// Spherical spline kernel `g(cos γ)`.
fn spline_kernel(cos_angle: f64) -> f64 {
    let x = cos_angle.clamp(-1.0, 1.0);
    let (mut p_prev, mut p) = (1.0, x);
    let mut acc = 0.0;
    for n in 1..=LEGENDRE_TERMS {
        let nf = n as f64;
        acc += (2.0 * nf + 1.0) / (nf * (nf + 1.0)).powi(SPLINE_ORDER) * p;
        let next = ((2.0 * nf + 1.0) * x * p - nf * p_prev) / (nf + 1.0);
        p_prev = p;
        p = next;
    }
    acc / (4.0 * std::f64::consts::PI)
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Interpolation matrix mapping good-channel values to the `targets` positions.
pub fn spline_weights(good: &[[f64; 3]], targets: &[[f64; 3]]) -> Result<Array2<f64>, EegError> {
    let ng = good.len();
    let mut sys = Array2::<f64>::zeros((ng + 1, ng + 1));
    for i in 0..ng {
        for j in 0..ng {
            sys[(i, j)] = spline_kernel(dot3(&good[i], &good[j]));
        }
        sys[(i, i)] += SPLINE_RIDGE;
        sys[(i, ng)] = 1.0;
        sys[(ng, i)] = 1.0;
    }
    let inv = linalg::inverse(sys.view())?;
    let mut rhs = Array2::<f64>::zeros((targets.len(), ng + 1));
    for (b, t) in targets.iter().enumerate() {
        for (i, g) in good.iter().enumerate() {
            rhs[(b, i)] = spline_kernel(dot3(t, g));
        }
        rhs[(b, ng)] = 1.0;
    }
    // columns beyond ng multiply the zero right-hand side of the constraint row
    Ok(rhs.dot(&inv.slice(ndarray::s![.., 0..ng])))
}

/// Replaces `bad` channels by spherical-spline interpolation from the others.
pub fn interpolate_spherical<T: Real>(x: &EegMatrix<T>, bad: &[usize]) -> Result<EegMatrix<T>, EegError> {
    if bad.is_empty() {
        return Ok(x.clone());
    }
    let good: Vec<usize> = (0..x.n_channels()).filter(|c| !bad.contains(c)).collect();
    if good.len() < 4 {
        return Err(EegError::TooFewChannels { good: good.len() });
    }
    let gp: Vec<[f64; 3]> = good.iter().map(|&c| x.positions[c]).collect();
    let bp: Vec<[f64; 3]> = bad.iter().map(|&c| x.positions[c]).collect();
    let w = spline_weights(&gp, &bp)?.mapv(T::lit);
    let good_data = x.data.select(Axis(0), &good);
    let filled = w.dot(&good_data);
    let mut out = x.clone();
    for (k, &c) in bad.iter().enumerate() {
        out.data.row_mut(c).assign(&filled.row(k));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Montage;

    fn matrix(data: Array2<f64>) -> EegMatrix<f64> {
        let m = Montage::standard();
        let nc = data.nrows();
        EegMatrix {
            data,
            sample_rate_hz: 500.0,
            channels: m.names[..nc].to_vec(),
            positions: m.positions[..nc].to_vec(),
            start_ms: 0.0,
        }
    }

    #[test]
    fn kernel_is_finite_and_decreasing() {
        assert!(spline_kernel(1.0) > spline_kernel(0.5));
        assert!(spline_kernel(0.5) > spline_kernel(-1.0));
    }

    #[test]
    fn constants_are_reproduced() {
        let x = matrix(Array2::from_elem((20, 50), 7.5));
        let out = interpolate_spherical(&x, &[3, 14]).unwrap();
        assert!(out.data.iter().all(|v| (v - 7.5).abs() < 1e-6));
    }

    #[test]
    fn empty_bad_set_is_identity() {
        let x = matrix(Array2::from_shape_fn((20, 30), |(c, t)| (c * t) as f64));
        assert_eq!(interpolate_spherical(&x, &[]).unwrap(), x);
    }

    #[test]
    fn too_few_good_channels() {
        let x = matrix(Array2::zeros((5, 10)));
        assert!(matches!(interpolate_spherical(&x, &[0, 1]), Err(EegError::TooFewChannels { good: 3 })));
    }

    #[test]
    fn linear_field_is_approximated() {
        // a smooth field over the scalp: v = 2 + y (front-back gradient)
        let m = Montage::standard();
        let data = Array2::from_shape_fn((20, 4), |(c, t)| 2.0 + m.positions[c][1] * (t as f64 + 1.0));
        let x = matrix(data.clone());
        let cz = m.index_of("Cz").unwrap();
        let out = interpolate_spherical(&x, &[cz]).unwrap();
        for t in 0..4 {
            assert!((out.data[(cz, t)] - data[(cz, t)]).abs() < 0.15 * (t as f64 + 1.0), "{}", out.data[(cz, t)]);
        }
    }

    #[test]
    fn identical_channels_not_flagged() {
        let row: Vec<f64> = (0..4000).map(|i| ((i as f64) * 0.07).sin() + ((i * 7919) % 13) as f64 * 0.1).collect();
        let data = Array2::from_shape_fn((6, 4000), |(_, t)| row[t]);
        let bad = detect_bad_channels(&matrix(data), &BadChannelConfig::default()).unwrap();
        assert!(bad.is_empty());
    }

    #[test]
    fn flat_channel_flagged() {
        let data = Array2::from_shape_fn((6, 4000), |(c, t)| if c == 2 { 0.0 } else { ((t as f64) * 0.07).sin() });
        let bad = detect_bad_channels(&matrix(data), &BadChannelConfig::default()).unwrap();
        assert_eq!(bad, vec![2]);
    }
}

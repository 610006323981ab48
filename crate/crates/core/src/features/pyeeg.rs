//! Fifteen per-channel descriptors, channel-major.

use ndarray::ArrayView2;

use super::nonlinear::{dfa_alpha, dfa_default_windows, higuchi_fd, hjorth, moments_minmaxstd, petrosian_fd};
use super::spectral::{band_power, BANDS};
use super::FeatureError;
use crate::num::Real;

pub const HIGUCHI_KMAX: usize = 8;
pub const MIN_EPOCH_SAMPLES: usize = 16;

pub const PER_CHANNEL: [&str; 15] = [
    "delta_psi",
    "theta_psi",
    "alpha_psi",
    "beta_psi",
    "gamma_psi",
    "pfd",
    "hjorth_mobility",
    "hjorth_complexity",
    "hfd",
    "dfa",
    "skewness",
    "kurtosis",
    "min",
    "max",
    "std",
];

pub fn pyeeg_schema(channels: &[String]) -> Vec<String> {
    channels
        .iter()
        .flat_map(|c| PER_CHANNEL.iter().map(move |f| format!("{c}.{f}")))
        .collect()
}

/// Features of one channels × samples epoch in [`pyeeg_schema`] order.
pub fn pyeeg_features<T: Real>(epoch: ArrayView2<T>, fs: f64) -> Result<Vec<T>, FeatureError> {
    let n = epoch.ncols();
    if n < MIN_EPOCH_SAMPLES {
        return Err(FeatureError::EpochTooShort { samples: n, needed: MIN_EPOCH_SAMPLES });
    }
    debug_assert_eq!(BANDS.len(), 5);
    let windows = dfa_default_windows(n);
    let mut out = Vec::with_capacity(epoch.nrows() * PER_CHANNEL.len());
    for row in epoch.rows() {
        let x = row.to_vec();
        out.extend_from_slice(&band_power(&x, fs));
        out.push(petrosian_fd(&x)?);
        let (mob, comp) = hjorth(&x)?;
        out.push(mob);
        out.push(comp);
        out.push(higuchi_fd(&x, HIGUCHI_KMAX)?);
        out.push(dfa_alpha(&x, &windows)?);
        let m = moments_minmaxstd(&x)?;
        out.extend_from_slice(&[m.skewness, m.kurtosis, m.min, m.max, m.std]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn noisy(nc: usize, ns: usize) -> Array2<f64> {
        Array2::from_shape_fn((nc, ns), |(c, t)| {
            ((t * 7919 + c * 104729) % 1009) as f64 / 1009.0 + (t as f64 * 0.1 * (c + 1) as f64).sin()
        })
    }

    #[test]
    fn arity_and_schema() {
        let names: Vec<String> = (0..20).map(|i| format!("ch{i}")).collect();
        let x = noisy(20, 125);
        let v = pyeeg_features(x.view(), 500.0).unwrap();
        assert_eq!(v.len(), 300);
        let s = pyeeg_schema(&names);
        assert_eq!(s.len(), 300);
        assert_eq!(s[2], "ch0.alpha_psi");
        assert_eq!(s[15], "ch1.delta_psi");
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn too_short() {
        let x = noisy(2, 15);
        assert_eq!(
            pyeeg_features(x.view(), 500.0),
            Err(FeatureError::EpochTooShort { samples: 15, needed: 16 })
        );
        assert!(pyeeg_features(noisy(2, 16).view(), 500.0).is_ok());
    }

    #[test]
    fn deterministic() {
        let x = noisy(3, 200);
        let a = pyeeg_features(x.view(), 500.0).unwrap();
        let b = pyeeg_features(x.clone().view(), 500.0).unwrap();
        assert_eq!(a, b);
    }
}

//! Saccade-locked potential vectors: baseline-corrected, block-averaged waveforms.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrpConfig {
    pub length_ms: f64,
    pub baseline_ms: f64,
    /// Output rate after block averaging.
    pub rate_hz: f64,
}

impl Default for SrpConfig {
    fn default() -> Self {
        SrpConfig { length_ms: 1000.0, baseline_ms: 100.0, rate_hz: 25.0 }
    }
}

impl SrpConfig {
    fn block(&self, fs: f64) -> usize {
        ((fs / self.rate_hz).round() as usize).max(1)
    }

    pub fn n_bins(&self, fs: f64) -> usize {
        let n = (self.length_ms * fs / 1000.0).round() as usize;
        n / self.block(fs)
    }
}

pub fn srp_schema(channels: &[String], bins: usize) -> Vec<String> {
    channels
        .iter()
        .flat_map(|c| (0..bins).map(move |b| format!("{c}.srp_{b:02}")))
        .collect()
}

/// Per channel: subtract the mean of the baseline window, then average
/// consecutive blocks of `fs / rate_hz` samples. Channel-major.
pub fn srp_features<T: Real>(epoch: ArrayView2<T>, fs: f64, cfg: &SrpConfig) -> Result<Vec<T>, FeatureError> {
    let block = cfg.block(fs);
    let bins = cfg.n_bins(fs);
    let needed = bins * block;
    let n = epoch.ncols();
    if bins == 0 || n < needed {
        return Err(FeatureError::EpochTooShort { samples: n, needed: needed.max(block) });
    }
    let nb = ((cfg.baseline_ms * fs / 1000.0).round() as usize).clamp(1, n);
    let inv_block = T::one() / T::from_usize_lossy(block);
    let mut out = Vec::with_capacity(epoch.nrows() * bins);
    for row in epoch.rows() {
        let base = row.iter().take(nb).copied().sum::<T>() / T::from_usize_lossy(nb);
        for b in 0..bins {
            let s: T = row.iter().skip(b * block).take(block).copied().sum();
            out.push(s * inv_block - base);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn constant_epoch_maps_to_zero() {
        let x = Array2::from_shape_fn((20, 500), |(c, _)| c as f64 * 3.0 - 7.0);
        let v = srp_features(x.view(), 500.0, &SrpConfig::default()).unwrap();
        assert_eq!(v.len(), 500);
        assert!(v.iter().all(|&f| f.abs() < 1e-12));
    }

    #[test]
    fn block_means() {
        let x = Array2::from_shape_fn((1, 500), |(_, t)| t as f64);
        let v = srp_features(x.view(), 500.0, &SrpConfig::default()).unwrap();
        // baseline is the mean of 0..50 = 24.5, first block mean 9.5
        assert!((v[0] - (9.5 - 24.5)).abs() < 1e-12);
        assert!((v[24] - (489.5 - 24.5)).abs() < 1e-12);
        assert_eq!(srp_schema(&["Pz".into()], 25)[3], "Pz.srp_03");
    }

    #[test]
    fn short_epoch_rejected() {
        let x = Array2::<f64>::zeros((2, 400));
        assert!(srp_features(x.view(), 500.0, &SrpConfig::default()).is_err());
    }
}

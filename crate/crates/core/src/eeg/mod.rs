//! EEG cleaning and epoch extraction.

pub mod artifacts;
pub mod channels;
pub mod container;
pub mod epoch;
pub mod filter;
pub mod reference;
pub mod sobi;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Recording;
use crate::linalg::LinalgError;
use crate::num::Real;

pub use artifacts::{reject_artifact_components, ArtifactConfig, Rejection};
pub use channels::{detect_bad_channels, interpolate_spherical, BadChannelConfig};
pub use epoch::{epoch_fixations, epoch_srp, Epoch, EpochKind};
pub use container::{load_epochs, read_epochs, save_epochs, write_epochs, EpochHeader, EpochRecord, EpochSet};
pub use filter::{FilterConfig, FilterDesignError, Sos};
pub use reference::common_average_reference;
pub use sobi::{sobi_unmix, SobiConfig, SobiResult};

#[derive(Debug, Error)]
pub enum EegError {
    #[error(transparent)]
    FilterDesign(#[from] FilterDesignError),
    #[error("only {good} good channels left, spherical interpolation needs at least 4")]
    TooFewChannels { good: usize },
    #[error("{samples} samples available, at least {needed} needed")]
    TooFewSamples { samples: usize, needed: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("every source component was classified as artifact")]
    AllRejected,
    #[error("channel {0} has no montage position")]
    Montage(String),
    #[error("non-finite value in channel {channel} at sample {sample}")]
    NonFinite { channel: usize, sample: usize },
    #[error("epoch file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Continuous multichannel EEG, channels × samples, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct EegMatrix<T> {
    pub data: Array2<T>,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    /// Unit-sphere electrode positions, one per row of `data`.
    pub positions: Vec<[f64; 3]>,
    /// Time of the first sample on the recording clock.
    pub start_ms: f64,
}

impl<T: Real> EegMatrix<T> {
    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.eq_ignore_ascii_case(name))
    }

    pub fn from_recording(rec: &Recording) -> Result<Self, EegError> {
        let positions = rec
            .channels
            .iter()
            .map(|c| {
                rec.montage
                    .index_of(c)
                    .map(|i| rec.montage.positions[i])
                    .ok_or_else(|| EegError::Montage(c.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = EegMatrix {
            data: rec.eeg.data.mapv(T::lit),
            sample_rate_hz: rec.eeg.sample_rate_hz(),
            channels: rec.channels.clone(),
            positions,
            start_ms: rec.eeg.t_ms.first().copied().unwrap_or(0.0),
        };
        m.check_finite()?;
        Ok(m)
    }

    pub fn check_finite(&self) -> Result<(), EegError> {
        match self.data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            Some(((channel, sample), _)) => Err(EegError::NonFinite { channel, sample }),
            None => Ok(()),
        }
    }

    pub fn with_data(&self, data: Array2<T>) -> Self {
        EegMatrix {
            data,
            sample_rate_hz: self.sample_rate_hz,
            channels: self.channels.clone(),
            positions: self.positions.clone(),
            start_ms: self.start_ms,
        }
    }
}

/// Zero-phase high-pass, band-stop and low-pass applied to every channel.
pub fn bandpass_chain<T: Real>(x: &EegMatrix<T>, cfg: &FilterConfig) -> Result<EegMatrix<T>, EegError> {
    let sos = cfg.design(x.sample_rate_hz)?.cast::<T>();
    let pad = filter::default_padlen(sos.sections.len(), x.sample_rate_hz);
    let mut out = Array2::zeros(x.data.raw_dim());
    for (c, row) in x.data.axis_iter(Axis(0)).enumerate() {
        let y = sos.filtfilt(&row.to_vec(), pad);
        out.row_mut(c).assign(&Array1::from(y));
    }
    Ok(x.with_data(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EegConfig {
    pub filter: FilterConfig,
    pub bad_channels: BadChannelConfig,
    pub sobi: SobiConfig,
    pub artifacts: ArtifactConfig,
}

/// What the cleaning chain did to a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub bad_channels: Vec<String>,
    pub n_components: usize,
    pub rejected_components: Vec<usize>,
    pub sobi_converged: bool,
    pub sobi_sweeps: usize,
}

/// Filters → bad-channel repair → common average → SOBI → artifact rejection.
pub fn preprocess<T: Real>(x: &EegMatrix<T>, cfg: &EegConfig) -> Result<(EegMatrix<T>, PreprocessReport), EegError> {
    let filtered = bandpass_chain(x, &cfg.filter)?;
    let bad = detect_bad_channels(&filtered, &cfg.bad_channels)?;
    let repaired = interpolate_spherical(&filtered, &bad)?;
    let car = common_average_reference(&repaired);
    let sobi = sobi_unmix(car.data.view(), &cfg.sobi)?;
    let rej = reject_artifact_components(&sobi, &car, &cfg.artifacts)?;
    let report = PreprocessReport {
        bad_channels: bad.iter().map(|&c| x.channels[c].clone()).collect(),
        n_components: sobi.sources.nrows(),
        rejected_components: rej.rejected.clone(),
        sobi_converged: sobi.converged,
        sobi_sweeps: sobi.sweeps,
    };
    Ok((rej.cleaned, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_matrix(freqs: &[f64], ns: usize) -> EegMatrix<f64> {
        let data = Array2::from_shape_fn((freqs.len(), ns), |(c, t)| {
            (std::f64::consts::TAU * freqs[c] * t as f64 / 500.0).sin()
        });
        EegMatrix {
            data,
            sample_rate_hz: 500.0,
            channels: (0..freqs.len()).map(|i| format!("c{i}")).collect(),
            positions: vec![[0.0, 0.0, 1.0]; freqs.len()],
            start_ms: 0.0,
        }
    }

    #[test]
    fn chain_passes_10hz_and_stops_50hz() {
        let x = sine_matrix(&[10.0, 50.0], 5000);
        let y = bandpass_chain(&x, &FilterConfig::default()).unwrap();
        let amp = |c: usize| y.data.row(c).slice(ndarray::s![1000..4000]).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((amp(0) - 1.0).abs() < 0.05, "{}", amp(0));
        assert!(amp(1) <= 0.1, "{}", amp(1));
    }

    #[test]
    fn low_sample_rate_rejected() {
        let mut x = sine_matrix(&[10.0], 500);
        x.sample_rate_hz = 100.0;
        assert!(matches!(bandpass_chain(&x, &FilterConfig::default()), Err(EegError::FilterDesign(_))));
    }

    #[test]
    fn f32_chain_runs() {
        let x = sine_matrix(&[10.0], 2000);
        let x32 = EegMatrix { data: x.data.mapv(|v| v as f32), sample_rate_hz: 500.0, channels: x.channels.clone(), positions: x.positions.clone(), start_ms: 0.0 };
        let y = bandpass_chain(&x32, &FilterConfig::default()).unwrap();
        assert!(y.data.iter().all(|v| v.is_finite()));
    }
}

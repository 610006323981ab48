//! Heuristic artifact-component rejection.
//!
//! A component is treated as ocular when its time course correlates with the
//! mean of the frontopolar channels, and as spike/muscle activity when its
//! excess kurtosis is extreme.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::sobi::SobiResult;
use super::{EegError, EegMatrix};
use crate::num::{pearson, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactConfig {
    pub ocular_correlation: f64,
    pub max_kurtosis: f64,
    pub frontal_channels: Vec<String>,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            ocular_correlation: 0.7,
            max_kurtosis: 15.0,
            frontal_channels: vec!["Fp1".into(), "Fp2".into()],
        }
    }
}

/// Excess kurtosis of a series; zero for constant input.
pub fn excess_kurtosis<T: Real>(x: &[T]) -> T {
    let n = T::from_usize_lossy(x.len().max(1));
    let m = x.iter().copied().sum::<T>() / n;
    let (mut m2, mut m4) = (T::zero(), T::zero());
    for &v in x {
        let d = (v - m) * (v - m);
        m2 = m2 + d;
        m4 = m4 + d * d;
    }
    m2 = m2 / n;
    m4 = m4 / n;
    if m2 <= T::zero() {
        T::zero()
    } else {
        m4 / (m2 * m2) - T::lit(3.0)
    }
}

#[derive(Debug, Clone)]
pub struct Rejection<T> {
    pub cleaned: EegMatrix<T>,
    pub rejected: Vec<usize>,
}

/// Drops artifact components and back-projects the rest. `x` is the signal
/// the decomposition was computed from.
pub fn reject_artifact_components<T: Real>(
    sobi: &SobiResult<T>,
    x: &EegMatrix<T>,
    cfg: &ArtifactConfig,
) -> Result<Rejection<T>, EegError> {
    let frontal: Vec<usize> = cfg.frontal_channels.iter().filter_map(|n| x.channel_index(n)).collect();
    let reference: Option<Vec<T>> = if frontal.is_empty() {
        None
    } else {
        Some(x.data.select(Axis(0), &frontal).mean_axis(Axis(0)).expect("non-empty").to_vec())
    };

    let mut keep = Vec::new();
    let mut rejected = Vec::new();
    for (i, src) in sobi.sources.axis_iter(Axis(0)).enumerate() {
        let s = src.to_vec();
        let ocular = reference
            .as_ref()
            .and_then(|r| pearson(&s, r))
            .is_some_and(|r| r.abs().as_f64() > cfg.ocular_correlation);
        let spiky = excess_kurtosis(&s).as_f64() > cfg.max_kurtosis;
        if ocular || spiky {
            rejected.push(i);
        } else {
            keep.push(i);
        }
    }
    if keep.is_empty() {
        return Err(EegError::AllRejected);
    }
    let mut cleaned = x.clone();
    cleaned.data = sobi.reconstruct(Some(&keep));
    Ok(Rejection { cleaned, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kurtosis_of_alternating_signal() {
        let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((excess_kurtosis(&x) + 2.0).abs() < 1e-12);
        assert_eq!(excess_kurtosis(&[2.0f32; 8]), 0.0);
    }
}

//! Gaze and EEG feature extraction.

pub mod csp;
pub mod nonlinear;
pub mod pyeeg;
pub mod spectral;
pub mod srp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::Fixation;

pub use csp::{csp_fit, CspModel};
pub use nonlinear::{dfa_alpha, dfa_default_windows, hjorth, higuchi_fd, moments_minmaxstd, petrosian_fd, Moments};
pub use pyeeg::{pyeeg_features, pyeeg_schema};
pub use spectral::{band_power, Band, BANDS};
pub use srp::{srp_features, srp_schema, SrpConfig};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("signal has zero variance")]
    DegenerateSignal,
    #[error("epoch has {samples} samples, at least {needed} required")]
    EpochTooShort { samples: usize, needed: usize },
    #[error("{0}")]
    TooFewPoints(String),
    #[error("training epochs contain a single class")]
    OneClassOnly,
    #[error("class covariance is singular")]
    SingularCovariance,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown feature set {0:?}")]
    UnknownSet(String),
}

/// Ordered named values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: Vec<String>, values: Vec<f64>) -> Self {
        assert_eq!(schema.len(), values.len(), "schema and values differ in length");
        FeatureVector { schema, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub const GAZE_FEATURE: &str = "fix_dur_ms";

pub fn gaze_feature(f: &Fixation) -> FeatureVector {
    FeatureVector::new(vec![GAZE_FEATURE.into()], vec![f.duration_ms])
}

/// A single feature block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Gaze,
    Pyeeg,
    Csp15,
    Srp,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Gaze => "gaze",
            BlockKind::Pyeeg => "pyeeg",
            BlockKind::Csp15 => "csp15",
            BlockKind::Srp => "srp",
        }
    }
}

/// One or more blocks fused by concatenation. `fusion` is `csp15+gaze`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureSet {
    pub name: String,
    pub blocks: Vec<BlockKind>,
}

impl FeatureSet {
    pub fn single(b: BlockKind) -> Self {
        FeatureSet { name: b.as_str().into(), blocks: vec![b] }
    }

    pub fn fusion() -> Self {
        FeatureSet { name: "fusion".into(), blocks: vec![BlockKind::Csp15, BlockKind::Gaze] }
    }

    /// gaze, pyeeg, csp15, srp, fusion: the sets of the standard report.
    pub fn standard() -> Vec<FeatureSet> {
        vec![
            FeatureSet::single(BlockKind::Gaze),
            FeatureSet::single(BlockKind::Pyeeg),
            FeatureSet::single(BlockKind::Csp15),
            FeatureSet::single(BlockKind::Srp),
            FeatureSet::fusion(),
        ]
    }

    pub fn uses(&self, b: BlockKind) -> bool {
        self.blocks.contains(&b)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for FeatureSet {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "fusion" {
            return Ok(FeatureSet::fusion());
        }
        let mut blocks = Vec::new();
        for part in s.split('+') {
            let b = match part.trim() {
                "gaze" => BlockKind::Gaze,
                "pyeeg" => BlockKind::Pyeeg,
                "csp15" | "csp" => BlockKind::Csp15,
                "srp" => BlockKind::Srp,
                _ => return Err(FeatureError::UnknownSet(s.into())),
            };
            if !blocks.contains(&b) {
                blocks.push(b);
            }
        }
        Ok(FeatureSet { name: s.into(), blocks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaze_feature_is_duration() {
        let f = Fixation { onset_ms: 0.0, duration_ms: 250.0, centroid_px: [1.0, 2.0], sample_count: 15, trial_id: None };
        let v = gaze_feature(&f);
        assert_eq!(v.values, vec![250.0]);
        assert_eq!(v.schema, vec!["fix_dur_ms"]);
    }

    #[test]
    fn parse_sets() {
        assert_eq!("fusion".parse::<FeatureSet>().unwrap().blocks, vec![BlockKind::Csp15, BlockKind::Gaze]);
        assert_eq!("srp+gaze".parse::<FeatureSet>().unwrap().blocks, vec![BlockKind::Srp, BlockKind::Gaze]);
        assert!("wavelet".parse::<FeatureSet>().is_err());
        assert_eq!(FeatureSet::standard().len(), 5);
    }
}

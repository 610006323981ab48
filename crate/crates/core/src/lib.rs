//! Target vs. non-target fixation classification from synchronized eye
//! tracking and EEG.
//!
//! Numeric kernels are generic over [`num::Real`]; the aliases below fix
//! the scalar to `f64`, which is what the pipeline and the CLI use.

pub mod config;
pub mod dataset;
pub mod eeg;
pub mod eval;
pub mod features;
pub mod gaze;
pub mod learn;
pub mod linalg;
pub mod num;
pub mod synth;

pub type Scalar = f64;
pub type Eeg = eeg::EegMatrix<Scalar>;
pub type EegEpoch = eeg::Epoch<Scalar>;
pub type Epochs = eeg::EpochSet<Scalar>;
pub type Sobi = eeg::SobiResult<Scalar>;
pub type Csp = features::CspModel<Scalar>;
pub type Scaler = learn::MinMaxScaler<Scalar>;
pub type Svm = learn::SvmModel<Scalar>;
pub type Model = learn::FittedModel<Scalar>;

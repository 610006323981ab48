//! Scaling, fusion and SVM classification.

pub mod grid;
pub mod scaler;
pub mod svm;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::num::Real;

pub use grid::{default_grid, grid_search, named_grid, stratified_folds, GridResult, GridRow};
pub use scaler::{fuse, fuse_blocks, fuse_schemas, MinMaxScaler};
pub use svm::{accuracy, svm_fit, Gamma, Kernel, KernelKind, SvmModel, SvmSpec};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LearnError {
    #[error("training data contain a single class")]
    OneClassOnly,
    #[error("no training rows")]
    Empty,
    #[error("non-finite feature value")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("feature name {0:?} appears in more than one block")]
    DuplicateFeatureName(String),
    #[error("feature schema does not match the model")]
    SchemaMismatch,
    #[error("invalid SVM parameters: {0}")]
    InvalidSpec(String),
}

/// A named feature block with its own scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledBlock<T> {
    pub name: String,
    pub schema: Vec<String>,
    pub scaler: MinMaxScaler<T>,
}

/// Per-block scalers, fused schema and the classifier trained on the fused,
/// scaled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    pub blocks: Vec<ScaledBlock<T>>,
    pub schema: Vec<String>,
    pub svm: SvmModel<T>,
    pub grid: Option<GridResult>,
}

/// Fits one scaler per block, fuses the scaled blocks and returns the fused matrix.
pub fn scale_and_fuse<T: Real>(
    blocks: &[(&str, &[String], ArrayView2<T>)],
) -> Result<(Vec<ScaledBlock<T>>, Array2<T>), LearnError> {
    let schemas: Vec<&[String]> = blocks.iter().map(|b| b.1).collect();
    fuse_schemas(&schemas)?;
    let mut scaled = Vec::new();
    let mut fitted = Vec::new();
    for (name, schema, x) in blocks {
        if x.ncols() != schema.len() {
            return Err(LearnError::Shape(format!("block {name}: {} columns, {} names", x.ncols(), schema.len())));
        }
        let s = MinMaxScaler::fit(*x)?;
        scaled.push(s.transform(*x));
        fitted.push(ScaledBlock { name: name.to_string(), schema: schema.to_vec(), scaler: s });
    }
    let views: Vec<_> = scaled.iter().map(|a| a.view()).collect();
    Ok((fitted, fuse_blocks(&views)?))
}

impl<T: Real> FittedModel<T> {
    /// Scales per-block test features with the training scalers and fuses them.
    pub fn prepare(&self, blocks: &[ArrayView2<T>]) -> Result<Array2<T>, LearnError> {
        if blocks.len() != self.blocks.len() {
            return Err(LearnError::SchemaMismatch);
        }
        let mut scaled = Vec::new();
        for (b, x) in self.blocks.iter().zip(blocks) {
            if x.ncols() != b.schema.len() {
                return Err(LearnError::SchemaMismatch);
            }
            scaled.push(b.scaler.transform(*x));
        }
        let views: Vec<_> = scaled.iter().map(|a| a.view()).collect();
        fuse_blocks(&views)
    }

    pub fn predict_blocks(&self, blocks: &[ArrayView2<T>]) -> Result<Vec<Label>, LearnError> {
        let x = self.prepare(blocks)?;
        Ok(self.svm.predict(x.view()))
    }

    /// Predicts on already fused, unscaled rows laid out as [`FittedModel::schema`].
    pub fn predict_fused(&self, x: ArrayView2<T>) -> Result<Vec<Label>, LearnError> {
        if x.ncols() != self.schema.len() {
            return Err(LearnError::SchemaMismatch);
        }
        let mut start = 0;
        let mut parts = Vec::new();
        for b in &self.blocks {
            let end = start + b.schema.len();
            parts.push(x.slice_axis(Axis(1), (start..end).into()));
            start = end;
        }
        self.predict_blocks(&parts)
    }
}

/// Per-block scaling, fusion, grid search and a final fit on all training rows.
pub fn train<T: Real>(
    blocks: &[(&str, &[String], ArrayView2<T>)],
    y: &[Label],
    grid: &[SvmSpec],
    folds: usize,
    seed: u64,
) -> Result<FittedModel<T>, LearnError> {
    let (fitted, x) = scale_and_fuse(blocks)?;
    let g = grid_search(x.view(), y, grid, folds, seed)?;
    let svm = svm_fit(x.view(), y, &g.best)?;
    let schema = fitted.iter().flat_map(|b| b.schema.iter().cloned()).collect();
    Ok(FittedModel { blocks: fitted, schema, svm, grid: Some(g) })
}

//! Min–max scaling and early fusion.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::features::FeatureVector;
use crate::num::Real;

/// Scaled test values are clipped to this range.
pub const CLIP_LO: f64 = -0.5;
pub const CLIP_HI: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Real> MinMaxScaler<T> {
    /// Column-wise bounds of a samples × features block.
    pub fn fit(x: ArrayView2<T>) -> Result<Self, LearnError> {
        if x.nrows() == 0 {
            return Err(LearnError::Empty);
        }
        let mut min = Vec::with_capacity(x.ncols());
        let mut max = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for &v in col {
                if !v.is_finite() {
                    return Err(LearnError::NonFinite);
                }
                lo = lo.min(v);
                hi = hi.max(v);
            }
            min.push(lo);
            max.push(hi);
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    pub fn apply_value(&self, j: usize, v: T) -> T {
        let span = self.max[j] - self.min[j];
        if !(span > T::zero()) {
            return T::zero();
        }
        ((v - self.min[j]) / span).max(T::lit(CLIP_LO)).min(T::lit(CLIP_HI))
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        v.iter().enumerate().map(|(j, &x)| self.apply_value(j, x)).collect()
    }

    pub fn transform(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| self.apply_value(j, v));
        }
        out
    }
}

/// Concatenates feature vectors. Names must be unique across blocks.
pub fn fuse(blocks: &[FeatureVector]) -> Result<FeatureVector, LearnError> {
    let schemas: Vec<&[String]> = blocks.iter().map(|b| b.schema.as_slice()).collect();
    let schema = fuse_schemas(&schemas)?;
    let values = blocks.iter().flat_map(|b| b.values.iter().copied()).collect();
    Ok(FeatureVector::new(schema, values))
}

pub fn fuse_schemas(schemas: &[&[String]]) -> Result<Vec<String>, LearnError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in schemas {
        for name in s.iter() {
            if !seen.insert(name.as_str()) {
                return Err(LearnError::DuplicateFeatureName(name.clone()));
            }
            out.push(name.clone());
        }
    }
    Ok(out)
}

/// Row-wise concatenation of equally long samples × features blocks.
pub fn fuse_blocks<T: Real>(blocks: &[ArrayView2<T>]) -> Result<Array2<T>, LearnError> {
    if blocks.is_empty() {
        return Err(LearnError::Empty);
    }
    ndarray::concatenate(Axis(1), blocks).map_err(|e| LearnError::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scaling_rules() {
        let train = array![[0.0, 3.0], [10.0, 3.0]];
        let s = MinMaxScaler::fit(train.view()).unwrap();
        assert_eq!(s.apply(&[5.0, 3.0]), vec![0.5, 0.0]);
        assert_eq!(s.apply(&[20.0, -100.0]), vec![1.5, 0.0]);
        assert_eq!(s.apply(&[-20.0, 100.0]), vec![-0.5, 0.0]);
    }

    #[test]
    fn fusion_rules() {
        let csp = FeatureVector::new((0..15).map(|j| format!("csp_{j:02}")).collect(), vec![0.0; 15]);
        let gaze = FeatureVector::new(vec!["fix_dur_ms".into()], vec![250.0]);
        let f = fuse(&[csp.clone(), gaze.clone()]).unwrap();
        assert_eq!(f.len(), 16);
        assert_eq!(fuse(std::slice::from_ref(&gaze)).unwrap(), gaze);
        assert_eq!(
            fuse(&[gaze.clone(), gaze]).unwrap_err(),
            LearnError::DuplicateFeatureName("fix_dur_ms".into())
        );
    }
}

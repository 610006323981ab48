//! Common spatial patterns.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::dataset::Label;
use crate::linalg::{covariance, sym_eigen};
use crate::num::Real;

pub const CSP_RIDGE: f64 = 1e-10;
pub const LOG_VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspModel<T> {
    /// n_components × n_channels; row `j` is the `j`-th spatial filter.
    pub filters: Array2<T>,
    /// Generalized eigenvalue of each kept filter, in row order.
    pub eigenvalues: Vec<T>,
    /// Index of each kept filter in the unsorted eigen-decomposition.
    pub order: Vec<usize>,
    pub n_components: usize,
}

impl<T: Real> CspModel<T> {
    pub fn schema(&self) -> Vec<String> {
        (0..self.n_components).map(|j| format!("csp_{j:02}")).collect()
    }

    /// Log-variance of each filtered signal.
    pub fn transform(&self, epoch: ArrayView2<T>) -> Result<Vec<T>, FeatureError> {
        if epoch.nrows() != self.filters.ncols() {
            return Err(FeatureError::Shape(format!(
                "epoch has {} channels, model expects {}",
                epoch.nrows(),
                self.filters.ncols()
            )));
        }
        let y = self.filters.dot(&epoch);
        let floor = T::lit(LOG_VAR_FLOOR);
        Ok(y.axis_iter(Axis(0))
            .map(|row| {
                let v = row.var(T::zero());
                v.max(floor).ln()
            })
            .collect())
    }
}

fn normalized_cov<T: Real>(e: ArrayView2<T>) -> Option<Array2<T>> {
    let c = covariance(e);
    let tr = c.diag().sum();
    (tr > T::zero()).then(|| c / tr)
}

fn add_ridge<T: Real>(c: &mut Array2<T>) {
    let n = c.nrows();
    let r = T::lit(CSP_RIDGE) * c.diag().sum() / T::from_usize_lossy(n);
    for i in 0..n {
        c[(i, i)] = c[(i, i)] + r;
    }
}

/// Fits spatial filters maximizing the variance ratio between targets and
/// non-targets. `λ` near 1 means target variance dominates.
pub fn csp_fit<T: Real>(epochs: &[ArrayView2<T>], labels: &[Label], n_components: usize) -> Result<CspModel<T>, FeatureError> {
    if epochs.len() != labels.len() {
        return Err(FeatureError::Shape(format!("{} epochs but {} labels", epochs.len(), labels.len())));
    }
    let nc = epochs.first().map(|e| e.nrows()).ok_or(FeatureError::OneClassOnly)?;
    if n_components == 0 || n_components > nc {
        return Err(FeatureError::Shape(format!("n_components {n_components} outside 1..={nc}")));
    }
    let mut sums = [Array2::<T>::zeros((nc, nc)), Array2::<T>::zeros((nc, nc))];
    let mut counts = [0usize; 2];
    for (e, &l) in epochs.iter().zip(labels) {
        if e.nrows() != nc {
            return Err(FeatureError::Shape("epochs differ in channel count".into()));
        }
        if e.ncols() < nc {
            return Err(FeatureError::EpochTooShort { samples: e.ncols(), needed: nc });
        }
        let k = usize::from(l == Label::Target);
        if let Some(c) = normalized_cov(e.view()) {
            sums[k] = &sums[k] + &c;
            counts[k] += 1;
        }
    }
    if counts.contains(&0) {
        return Err(FeatureError::OneClassOnly);
    }
    let [mut c0, mut c1] = sums;
    c0 = c0 / T::from_usize_lossy(counts[0]);
    c1 = c1 / T::from_usize_lossy(counts[1]);
    add_ridge(&mut c0);
    add_ridge(&mut c1);

    let composite = &c0 + &c1;
    let ce = sym_eigen(composite.view()).map_err(|_| FeatureError::SingularCovariance)?;
    let top = ce.values.iter().copied().fold(T::zero(), T::max);
    if !(top > T::zero()) || !top.is_finite() {
        return Err(FeatureError::SingularCovariance);
    }
    let floor = top * T::epsilon();
    let inv_sqrt = Array1::from_iter(ce.values.iter().map(|&v| T::one() / v.max(floor).sqrt()));
    // P = D^-1/2 Uᵀ
    let p = &ce.vectors.t() * &inv_sqrt.insert_axis(Axis(1));
    let s = p.dot(&c1).dot(&p.t());
    let se = sym_eigen(s.view()).map_err(|_| FeatureError::SingularCovariance)?;
    let all = se.vectors.t().dot(&p);

    let mut idx: Vec<usize> = (0..nc).collect();
    let score = |i: usize| {
        let l = se.values[i];
        l.max(T::one() - l)
    };
    idx.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap_or(std::cmp::Ordering::Equal));
    idx.truncate(n_components);
    Ok(CspModel {
        filters: all.select(Axis(0), &idx),
        eigenvalues: idx.iter().map(|&i| se.values[i]).collect(),
        order: idx,
        n_components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inverse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(seed: u64, boost: f64, n_per: usize) -> (Vec<Array2<f64>>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut eps = Vec::new();
        let mut labels = Vec::new();
        for k in 0..2 * n_per {
            let target = k % 2 == 0;
            let mut e = Array2::from_shape_fn((8, 200), |_| StandardNormal.sample(&mut rng));
            if target {
                let mut r = e.row_mut(1);
                r *= boost;
            }
            eps.push(e);
            labels.push(if target { Label::Target } else { Label::Nontarget });
        }
        (eps, labels)
    }

    #[test]
    fn leading_filter_picks_boosted_channel() {
        let (e, l) = toy(1, 3.0, 40);
        let views: Vec<_> = e.iter().map(|x| x.view()).collect();
        let m = csp_fit(&views, &l, 4).unwrap();
        let w = m.filters.row(0);
        let cos = w[1].abs() / w.dot(&w).sqrt();
        assert!(cos > 0.95, "{w}");
        assert!(m.eigenvalues[0] > 0.8);
    }

    #[test]
    fn log_variance_shift_under_scaling() {
        let (e, l) = toy(2, 2.0, 20);
        let views: Vec<_> = e.iter().map(|x| x.view()).collect();
        let m = csp_fit(&views, &l, 3).unwrap();
        let a = m.transform(e[0].view()).unwrap();
        let b = m.transform((&e[0] * 2.0).view()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - 4f64.ln()).abs() < 1e-9);
        }
        let z = m.transform(Array2::<f64>::zeros((8, 50)).view()).unwrap();
        assert!(z.iter().all(|v| (v - LOG_VAR_FLOOR.ln()).abs() < 1e-12));
    }

    #[test]
    fn full_basis_is_invertible() {
        let (e, l) = toy(3, 1.5, 30);
        let views: Vec<_> = e.iter().map(|x| x.view()).collect();
        let m = csp_fit(&views, &l, 8).unwrap();
        assert!(inverse(m.filters.view()).is_ok());
        assert!(m.eigenvalues.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn one_class_rejected() {
        let (e, _) = toy(4, 1.0, 3);
        let views: Vec<_> = e.iter().map(|x| x.view()).collect();
        assert_eq!(csp_fit(&views, &vec![Label::Target; 6], 2), Err(FeatureError::OneClassOnly));
    }

    #[test]
    fn runs_in_f32() {
        let (e, l) = toy(5, 3.0, 20);
        let e32: Vec<Array2<f32>> = e.iter().map(|x| x.mapv(|v| v as f32)).collect();
        let views: Vec<_> = e32.iter().map(|x| x.view()).collect();
        let m = csp_fit(&views, &l, 2).unwrap();
        assert!(m.transform(views[0]).unwrap().iter().all(|v| v.is_finite()));
    }
}

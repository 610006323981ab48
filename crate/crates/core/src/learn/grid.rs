//! Hyperparameter grid and stratified cross-validation.

use std::cmp::Ordering;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{label_of, smo_solve, Gamma, Gram, KernelKind, SmoOptions, SvmSpec};
use super::LearnError;
use crate::dataset::Label;
use crate::num::Real;

pub const C_VALUES: [f64; 3] = [0.1, 1.0, 10.0];
pub const RBF_GAMMAS: [Gamma; 4] = [Gamma::Value(0.1), Gamma::Value(1.0), Gamma::Scale, Gamma::Auto];
pub const INNER_FOLDS: usize = 5;

/// Linear and cubic-polynomial kernels over C, then RBF over C × γ: 18 cells.
pub fn default_grid() -> Vec<SvmSpec> {
    let mut g = Vec::new();
    for &c in &C_VALUES {
        g.push(SvmSpec::linear(c));
    }
    for &c in &C_VALUES {
        g.push(SvmSpec::poly(c));
    }
    for &c in &C_VALUES {
        for &gm in &RBF_GAMMAS {
            g.push(SvmSpec::rbf(c, gm));
        }
    }
    g
}

/// `default` (all 18 cells) or the cells of one kernel: `linear`, `poly`, `rbf`.
pub fn named_grid(name: &str) -> Option<Vec<SvmSpec>> {
    let kind = match name {
        "default" => return Some(default_grid()),
        "linear" => KernelKind::Linear,
        "poly" => KernelKind::Poly,
        "rbf" => KernelKind::Rbf,
        _ => return None,
    };
    Some(default_grid().into_iter().filter(|s| s.kernel == kind).collect())
}

/// Fold id per sample: each class is shuffled and dealt round-robin, so fold
/// class counts differ by at most one.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0usize; labels.len()];
    let mut offset = 0;
    for class in [Label::Target, Label::Nontarget] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (r, &i) in idx.iter().enumerate() {
            fold[i] = (offset + r) % k;
        }
        offset += idx.len();
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub spec: SvmSpec,
    /// γ resolved on the full training set (0 for linear).
    pub gamma: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: SvmSpec,
    pub table: Vec<GridRow>,
}

fn tie_order(a: &GridRow, b: &GridRow) -> Ordering {
    b.mean_accuracy
        .partial_cmp(&a.mean_accuracy)
        .unwrap_or(Ordering::Equal)
        .then(a.spec.c.partial_cmp(&b.spec.c).unwrap_or(Ordering::Equal))
        .then(a.spec.kernel.cmp(&b.spec.kernel))
        .then(a.gamma.partial_cmp(&b.gamma).unwrap_or(Ordering::Equal))
}

/// Evaluates `grid` by stratified `folds`-fold cross-validation on `x` only
/// and picks the cell with the best mean accuracy; ties go to lower C, then
/// linear < poly < rbf, then smaller resolved γ.
pub fn grid_search<T: Real>(
    x: ArrayView2<T>,
    y: &[Label],
    grid: &[SvmSpec],
    folds: usize,
    seed: u64,
) -> Result<GridResult, LearnError> {
    if x.nrows() != y.len() {
        return Err(LearnError::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if grid.is_empty() {
        return Err(LearnError::InvalidSpec("empty grid".into()));
    }
    for s in grid {
        s.validate()?;
    }
    let n_t = y.iter().filter(|&&l| l == Label::Target).count();
    if n_t == 0 || n_t == y.len() {
        return Err(LearnError::OneClassOnly);
    }
    let k = folds.clamp(2, n_t.min(y.len() - n_t).max(2));
    let fold = stratified_folds(y, k, seed);
    let gram = Gram::new(x);
    let opts = SmoOptions::default();

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let scores: Vec<Result<f64, LearnError>> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let spec = &grid[g];
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
            let kernel = spec.resolve(x.select(Axis(0), &train).view());
            let sol = match smo_solve(&gram, &train, y, &kernel, spec.c, &opts) {
                Ok(s) => s,
                Err(LearnError::OneClassOnly) => return Ok(0.0),
                Err(e) => return Err(e),
            };
            let mut correct = 0usize;
            for &v in &test {
                let mut d = -sol.rho;
                for (a, &tr) in train.iter().enumerate() {
                    if sol.alpha[a] > T::zero() {
                        d = d + sol.alpha[a] * T::lit(y[tr].sign()) * gram.k(&kernel, tr, v);
                    }
                }
                if label_of(d) == y[v] {
                    correct += 1;
                }
            }
            Ok(correct as f64 / test.len().max(1) as f64)
        })
        .collect();

    let mut table = Vec::with_capacity(grid.len());
    for (g, spec) in grid.iter().enumerate() {
        let accs = scores[g * k..(g + 1) * k].iter().cloned().collect::<Result<Vec<f64>, _>>()?;
        let mean = accs.iter().sum::<f64>() / k as f64;
        table.push(GridRow { spec: *spec, gamma: spec.resolve(x).gamma, fold_accuracies: accs, mean_accuracy: mean });
    }
    let best = table.iter().min_by(|a, b| tie_order(a, b)).expect("non-empty grid").spec;
    Ok(GridResult { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn grid_has_18_cells() {
        let g = default_grid();
        assert_eq!(g.len(), 18);
        assert_eq!(g.iter().filter(|s| s.kernel == KernelKind::Rbf).count(), 12);
        assert_eq!(named_grid("default").unwrap(), g);
        assert_eq!(named_grid("poly").unwrap().len(), 3);
        assert!(named_grid("cubic").is_none());
    }

    #[test]
    fn folds_are_stratified() {
        let y: Vec<Label> = (0..53).map(|i| if i % 3 == 0 { Label::Target } else { Label::Nontarget }).collect();
        let f = stratified_folds(&y, 5, 9);
        for k in 0..5 {
            let t = (0..53).filter(|&i| f[i] == k && y[i] == Label::Target).count();
            assert!((3..=4).contains(&t), "fold {k} has {t} targets");
        }
        assert_eq!(f, stratified_folds(&y, 5, 9));
    }

    #[test]
    fn separable_set_prefers_linear() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| {
            let side = if i < 20 { -2.0 } else { 2.0 };
            if j == 0 {
                side + (i % 5) as f64 * 0.1
            } else {
                (i % 7) as f64 * 0.3
            }
        });
        let y: Vec<Label> = (0..40).map(|i| if i < 20 { Label::Nontarget } else { Label::Target }).collect();
        let r = grid_search(x.view(), &y, &default_grid(), 5, 1).unwrap();
        assert_eq!(r.table.len(), 18);
        assert_eq!(r.best, SvmSpec::linear(0.1));
        assert_eq!(r, grid_search(x.view(), &y, &default_grid(), 5, 1).unwrap());
    }
}

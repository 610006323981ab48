//! Two-class soft-margin SVM trained by sequential minimal optimization.
//!
//! Working pairs are chosen with second-order information (maximal gain under
//! the pair's quadratic model). Once the KKT gap is below tolerance, the free
//! multipliers are re-solved exactly from the active-set equations.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::dataset::Label;
use crate::linalg;
use crate::num::Real;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Largest free set the polishing solve is attempted on.
pub const DEFAULT_POLISH_MAX_FREE: usize = 200;
pub const POLY_DEGREE: i32 = 3;
pub const POLY_COEF0: f64 = 1.0;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Poly,
    Rbf,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Poly => "poly",
            KernelKind::Rbf => "rbf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    Value(f64),
    /// `1 / (d · Var(X))` over all training entries.
    Scale,
    /// `1 / d`.
    Auto,
}

impl Gamma {
    pub fn resolve<T: Real>(self, x: ArrayView2<T>) -> f64 {
        let d = x.ncols().max(1) as f64;
        match self {
            Gamma::Value(g) => g,
            Gamma::Auto => 1.0 / d,
            Gamma::Scale => {
                let n = x.len().max(1) as f64;
                let m = x.iter().map(|v| v.as_f64()).sum::<f64>() / n;
                let var = x.iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    1.0 / (d * var)
                } else {
                    1.0
                }
            }
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Value(g) => write!(f, "{g}"),
            Gamma::Scale => f.write_str("scale"),
            Gamma::Auto => f.write_str("auto"),
        }
    }
}

/// Hyperparameters before `γ` is resolved against training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmSpec {
    pub kernel: KernelKind,
    pub c: f64,
    /// Used by `poly` and `rbf`; ignored by `linear`.
    pub gamma: Gamma,
}

impl SvmSpec {
    pub fn linear(c: f64) -> Self {
        SvmSpec { kernel: KernelKind::Linear, c, gamma: Gamma::Scale }
    }

    pub fn poly(c: f64) -> Self {
        SvmSpec { kernel: KernelKind::Poly, c, gamma: Gamma::Scale }
    }

    pub fn rbf(c: f64, gamma: Gamma) -> Self {
        SvmSpec { kernel: KernelKind::Rbf, c, gamma }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(LearnError::InvalidSpec(format!("C must be positive, got {}", self.c)));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0) {
                return Err(LearnError::InvalidSpec(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }

    pub fn resolve<T: Real>(&self, x: ArrayView2<T>) -> Kernel {
        let gamma = match self.kernel {
            KernelKind::Linear => 0.0,
            _ => self.gamma.resolve(x),
        };
        Kernel { kind: self.kernel, gamma, degree: POLY_DEGREE, coef0: POLY_COEF0 }
    }
}

impl fmt::Display for SvmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kernel {
            KernelKind::Linear => write!(f, "linear C={}", self.c),
            k => write!(f, "{} C={} gamma={}", k.as_str(), self.c, self.gamma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub degree: i32,
    pub coef0: f64,
}

impl Kernel {
    /// Kernel value from the inner product and the two squared norms.
    #[inline]
    pub fn from_dot<T: Real>(&self, dot: T, sq_a: T, sq_b: T) -> T {
        match self.kind {
            KernelKind::Linear => dot,
            KernelKind::Poly => (T::lit(self.gamma) * dot + T::lit(self.coef0)).powi(self.degree),
            KernelKind::Rbf => {
                let d2 = (sq_a + sq_b - dot - dot).max(T::zero());
                (-T::lit(self.gamma) * d2).exp()
            }
        }
    }

    pub fn eval<T: Real>(&self, a: ArrayView1<T>, b: ArrayView1<T>) -> T {
        self.from_dot(a.dot(&b), a.dot(&a), b.dot(&b))
    }
}

/// Inner products of a training set, reusable across kernels and subsets.
#[derive(Debug, Clone)]
pub struct Gram<T> {
    pub dot: Array2<T>,
    pub sq: Vec<T>,
}

impl<T: Real> Gram<T> {
    pub fn new(x: ArrayView2<T>) -> Self {
        let dot = x.dot(&x.t());
        let sq = dot.diag().to_vec();
        Gram { dot, sq }
    }

    #[inline]
    pub fn k(&self, kernel: &Kernel, i: usize, j: usize) -> T {
        kernel.from_dot(self.dot[(i, j)], self.sq[i], self.sq[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub polish: bool,
    pub polish_max_free: usize,
    /// Temporarily drop bounded variables that cannot be selected.
    pub shrinking: bool,
    /// Record the dual objective after every update.
    pub trace: bool,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            polish: true,
            polish_max_free: DEFAULT_POLISH_MAX_FREE,
            shrinking: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoSolution<T> {
    pub alpha: Vec<T>,
    pub rho: T,
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective `eᵀα − ½ αᵀQα` per iteration when tracing.
    pub objective: Vec<T>,
}

fn signs(y: &[Label]) -> Vec<f64> {
    y.iter().map(|l| l.sign()).collect()
}

fn check_classes(y: &[Label]) -> Result<(), LearnError> {
    let has_t = y.contains(&Label::Target);
    let has_n = y.contains(&Label::Nontarget);
    if has_t && has_n {
        Ok(())
    } else {
        Err(LearnError::OneClassOnly)
    }
}

fn rho_from_gradient<T: Real>(alpha: &[T], grad: &[T], y: &[T], c: T) -> T {
    let (mut ub, mut lb) = (T::infinity(), T::neg_infinity());
    let (mut sum, mut nfree) = (T::zero(), 0usize);
    for i in 0..alpha.len() {
        let yg = y[i] * grad[i];
        if alpha[i] >= c {
            if y[i] < T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[i] <= T::zero() {
            if y[i] > T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nfree += 1;
            sum = sum + yg;
        }
    }
    if nfree > 0 {
        sum / T::from_usize_lossy(nfree)
    } else {
        (ub + lb) * T::lit(0.5)
    }
}

/// Largest KKT gap `m(α) − M(α)`.
fn kkt_gap<T: Real>(alpha: &[T], grad: &[T], y: &[T], c: T) -> T {
    let (mut gmax, mut gmin) = (T::neg_infinity(), T::infinity());
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        let up = (y[t] > T::zero() && alpha[t] < c) || (y[t] < T::zero() && alpha[t] > T::zero());
        let low = (y[t] > T::zero() && alpha[t] > T::zero()) || (y[t] < T::zero() && alpha[t] < c);
        if up {
            gmax = gmax.max(v);
        }
        if low {
            gmin = gmin.min(v);
        }
    }
    if gmax == T::neg_infinity() || gmin == T::infinity() {
        T::zero()
    } else {
        gmax - gmin
    }
}

fn dual_objective<T: Real>(alpha: &[T], grad: &[T]) -> T {
    // f(α) = ½ αᵀ(G − e) for G = Qα − e; the dual objective is −f.
    -alpha.iter().zip(grad).map(|(&a, &g)| a * (g - T::one())).sum::<T>() * T::lit(0.5)
}

/// Solves the dual for training points `idx` of `gram`, labels `y[idx]`.
pub fn smo_solve<T: Real>(
    gram: &Gram<T>,
    idx: &[usize],
    y: &[Label],
    kernel: &Kernel,
    c: f64,
    opts: &SmoOptions,
) -> Result<SmoSolution<T>, LearnError> {
    let ys: Vec<T> = signs(&idx.iter().map(|&i| y[i]).collect::<Vec<_>>()).into_iter().map(T::lit).collect();
    check_classes(&idx.iter().map(|&i| y[i]).collect::<Vec<_>>())?;
    let n = idx.len();
    let c = T::lit(c);
    let mut q = vec![T::zero(); n * n];
    for a in 0..n {
        for b in a..n {
            let v = ys[a] * ys[b] * gram.k(kernel, idx[a], idx[b]);
            q[a * n + b] = v;
            q[b * n + a] = v;
        }
    }
    let mut alpha = vec![T::zero(); n];
    let mut grad = vec![-T::one(); n];
    let tol = T::lit(opts.tol);
    let tau = T::lit(TAU);
    let mut objective = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let shrinking = opts.shrinking && !opts.trace;
    let shrink_every = n.clamp(1, 1000);
    let mut countdown = shrink_every;
    let mut active: Vec<usize> = (0..n).collect();

    while iterations < opts.max_iter {
        // first index: maximal violating candidate in I_up
        let mut gmax = T::neg_infinity();
        let mut i = usize::MAX;
        for &t in &active {
            let up = (ys[t] > T::zero() && alpha[t] < c) || (ys[t] < T::zero() && alpha[t] > T::zero());
            if up {
                let v = -ys[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        // second index: best second-order gain in I_low
        let mut gmin = T::infinity();
        let mut j = usize::MAX;
        let mut best = T::infinity();
        for &t in &active {
            let low = (ys[t] > T::zero() && alpha[t] > T::zero()) || (ys[t] < T::zero() && alpha[t] < c);
            if !low {
                continue;
            }
            let v = -ys[t] * grad[t];
            gmin = gmin.min(v);
            if i == usize::MAX {
                continue;
            }
            let b = gmax - v;
            if b > T::zero() {
                let a = q[i * n + i] + q[t * n + t] - T::lit(2.0) * ys[i] * ys[t] * q[i * n + t];
                let a = if a > T::zero() { a } else { tau };
                let gain = -(b * b) / a;
                if gain <= best {
                    best = gain;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            if active.len() < n {
                // optimal on the shrunk problem: restore every variable and re-check
                reconstruct_gradient(&q, &alpha, &mut grad);
                active = (0..n).collect();
                countdown = shrink_every;
                continue;
            }
            converged = true;
            break;
        }
        if shrinking {
            countdown -= 1;
            if countdown == 0 {
                countdown = shrink_every;
                active.retain(|&t| {
                    let at_upper = alpha[t] >= c;
                    let at_lower = alpha[t] <= T::zero();
                    if !at_upper && !at_lower {
                        return true;
                    }
                    let v = -ys[t] * grad[t];
                    let in_up = (ys[t] > T::zero()) == at_lower;
                    if in_up {
                        v >= gmin || t == i || t == j
                    } else {
                        v <= gmax || t == i || t == j
                    }
                });
            }
        }
        iterations += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q[i * n + i], q[j * n + j], q[i * n + j]);
        if ys[i] != ys[j] {
            let mut quad = qii + qjj + qij + qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] = alpha[i] + delta;
            alpha[j] = alpha[j] + delta;
            if diff > T::zero() {
                if alpha[j] < T::zero() {
                    alpha[j] = T::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = -diff;
            }
            if diff > T::zero() {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - qij - qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] = alpha[i] - delta;
            alpha[j] = alpha[j] + delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < T::zero() {
                alpha[j] = T::zero();
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        let (qi, qj) = (&q[i * n..(i + 1) * n], &q[j * n..(j + 1) * n]);
        if active.len() == n {
            for t in 0..n {
                grad[t] = grad[t] + qi[t] * di + qj[t] * dj;
            }
        } else {
            for &t in &active {
                grad[t] = grad[t] + qi[t] * di + qj[t] * dj;
            }
        }
        if opts.trace {
            objective.push(dual_objective(&alpha, &grad));
        }
    }
    if !converged {
        log::warn!("SMO stopped at the iteration cap ({}) without meeting tolerance", opts.max_iter);
    }

    if active.len() < n {
        reconstruct_gradient(&q, &alpha, &mut grad);
    }
    let mut rho = rho_from_gradient(&alpha, &grad, &ys, c);
    if converged && opts.polish {
        if let Some((pa, pr)) = polish(&q, &ys, &alpha, c, tol, opts.polish_max_free) {
            alpha = pa;
            rho = pr;
        }
    }
    Ok(SmoSolution { alpha, rho, converged, iterations, objective })
}

/// `grad = Qα − e` from scratch.
fn reconstruct_gradient<T: Real>(q: &[T], alpha: &[T], grad: &mut [T]) {
    let n = alpha.len();
    grad.iter_mut().for_each(|g| *g = -T::one());
    for (s, &a) in alpha.iter().enumerate() {
        if a != T::zero() {
            let row = &q[s * n..(s + 1) * n];
            for t in 0..n {
                grad[t] = grad[t] + row[t] * a;
            }
        }
    }
}

/// Exact solve of the equality-constrained problem on the current free set.
/// Returns `None` (keep the SMO iterate) if the result leaves the box or
/// breaks the KKT tolerance.
fn polish<T: Real>(q: &[T], y: &[T], alpha: &[T], c: T, tol: T, max_free: usize) -> Option<(Vec<T>, T)> {
    let n = alpha.len();
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > T::zero() && alpha[i] < c).collect();
    if free.is_empty() || free.len() > max_free {
        return None;
    }
    let bound: Vec<usize> = (0..n).filter(|&i| alpha[i] >= c).collect();
    let m = free.len();
    let mut a = Array2::<T>::zeros((m + 1, m + 1));
    let mut b = Array2::<T>::zeros((m + 1, 1));
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            a[(r, s)] = q[i * n + j];
        }
        a[(r, m)] = -y[i];
        a[(m, r)] = y[i];
        let mut rhs = T::one();
        for &j in &bound {
            rhs = rhs - q[i * n + j] * c;
        }
        b[(r, 0)] = rhs;
    }
    b[(m, 0)] = -bound.iter().map(|&j| y[j] * c).sum::<T>();
    let sol = linalg::solve(a.view(), b.view()).ok()?;
    let mut out = alpha.to_vec();
    for (r, &i) in free.iter().enumerate() {
        let v = sol[(r, 0)];
        if !v.is_finite() || v < T::zero() || v > c {
            return None;
        }
        out[i] = v;
    }
    let rho = sol[(m, 0)];
    let mut grad = vec![-T::one(); n];
    for t in 0..n {
        for s in 0..n {
            if out[s] != T::zero() {
                grad[t] = grad[t] + q[t * n + s] * out[s];
            }
        }
    }
    if kkt_gap(&out, &grad, y, c) > tol {
        return None;
    }
    Some((out, rho))
}

/// A trained two-class SVM. `decision(x) = Σ coef_i K(sv_i, x) − rho`, with
/// positive values predicting [`Label::Target`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel<T> {
    pub spec: SvmSpec,
    pub kernel: Kernel,
    pub support_vectors: Array2<T>,
    /// `α_i y_i` for each support vector.
    pub dual_coef: Vec<T>,
    pub rho: T,
    /// Row of each support vector in the training data.
    pub support: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> SvmModel<T> {
    pub fn from_solution(
        spec: SvmSpec,
        kernel: Kernel,
        x: ArrayView2<T>,
        idx: &[usize],
        y: &[Label],
        sol: &SmoSolution<T>,
    ) -> Self {
        let support: Vec<usize> = (0..idx.len()).filter(|&k| sol.alpha[k] > T::zero()).collect();
        let rows: Vec<usize> = support.iter().map(|&k| idx[k]).collect();
        SvmModel {
            spec,
            kernel,
            support_vectors: x.select(Axis(0), &rows),
            dual_coef: support.iter().map(|&k| sol.alpha[k] * T::lit(y[idx[k]].sign())).collect(),
            rho: sol.rho,
            support: rows,
            converged: sol.converged,
            iterations: sol.iterations,
        }
    }

    pub fn decision_value(&self, x: ArrayView1<T>) -> T {
        let sq = x.dot(&x);
        let mut acc = -self.rho;
        for (sv, &a) in self.support_vectors.axis_iter(Axis(0)).zip(&self.dual_coef) {
            acc = acc + a * self.kernel.from_dot(sv.dot(&x), sv.dot(&sv), sq);
        }
        acc
    }

    pub fn decision_function(&self, x: ArrayView2<T>) -> Vec<T> {
        x.axis_iter(Axis(0)).map(|r| self.decision_value(r)).collect()
    }

    pub fn predict(&self, x: ArrayView2<T>) -> Vec<Label> {
        self.decision_function(x).into_iter().map(label_of).collect()
    }
}

/// Sign rule: strictly positive is a target, zero and below a non-target.
pub fn label_of<T: Real>(v: T) -> Label {
    if v > T::zero() {
        Label::Target
    } else {
        Label::Nontarget
    }
}

pub fn svm_fit_with<T: Real>(x: ArrayView2<T>, y: &[Label], spec: &SvmSpec, opts: &SmoOptions) -> Result<SvmModel<T>, LearnError> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(LearnError::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite);
    }
    let gram = Gram::new(x);
    let kernel = spec.resolve(x);
    let idx: Vec<usize> = (0..x.nrows()).collect();
    let sol = smo_solve(&gram, &idx, y, &kernel, spec.c, opts)?;
    Ok(SvmModel::from_solution(*spec, kernel, x, &idx, y, &sol))
}

pub fn svm_fit<T: Real>(x: ArrayView2<T>, y: &[Label], spec: &SvmSpec) -> Result<SvmModel<T>, LearnError> {
    svm_fit_with(x, y, spec, &SmoOptions::default())
}

pub fn accuracy(pred: &[Label], truth: &[Label]) -> f64 {
    if truth.is_empty() {
        return f64::NAN;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const T: Label = Label::Target;
    const N: Label = Label::Nontarget;

    #[test]
    fn separable_pairs_midpoint_bias() {
        let x: Array2<f64> = array![[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]];
        let y = [N, N, T, T];
        let m = svm_fit(x.view(), &y, &SvmSpec::linear(10.0)).unwrap();
        assert_eq!(m.predict(x.view()), y.to_vec());
        // boundary at x0 = 1.5
        assert!(m.decision_value(array![1.5, 0.3].view()).abs() < 1e-9);
        assert!((m.decision_value(array![3.0, 0.5].view()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn xor_with_rbf() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [N, N, T, T];
        let m = svm_fit(x.view(), &y, &SvmSpec::rbf(10.0, Gamma::Value(1.0))).unwrap();
        assert_eq!(m.predict(x.view()), y.to_vec());
    }

    #[test]
    fn zero_decision_is_nontarget() {
        assert_eq!(label_of(0.0f64), N);
        assert_eq!(label_of(1e-300f64), T);
    }

    #[test]
    fn one_class_error() {
        let x = array![[0.0], [1.0]];
        assert_eq!(svm_fit(x.view(), &[T, T], &SvmSpec::linear(1.0)).unwrap_err(), LearnError::OneClassOnly);
    }

    #[test]
    fn gamma_resolution() {
        let x = array![[0.0, 2.0], [2.0, 0.0]];
        assert_eq!(Gamma::Auto.resolve(x.view()), 0.5);
        // variance of {0,2,2,0} is 1
        assert_eq!(Gamma::Scale.resolve(x.view()), 0.5);
        assert_eq!(Gamma::Scale.resolve(Array2::<f64>::ones((3, 2)).view()), 1.0);
    }

    #[test]
    fn objective_non_decreasing() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 31 + j * 17) % 23) as f64 / 7.0);
        let y: Vec<Label> = (0..40).map(|i| if (i * 7) % 5 < 2 { T } else { N }).collect();
        let opts = SmoOptions { trace: true, ..SmoOptions::default() };
        let gram = Gram::new(x.view());
        let k = SvmSpec::rbf(1.0, Gamma::Value(0.5)).resolve(x.view());
        let idx: Vec<usize> = (0..40).collect();
        let sol = smo_solve(&gram, &idx, &y, &k, 1.0, &opts).unwrap();
        assert!(sol.converged);
        for w in sol.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }
}

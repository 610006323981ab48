//! Small dense linear algebra: symmetric eigendecomposition, linear solves and
//! covariance helpers. Matrices here are at most a few dozen rows, so plain
//! Jacobi and Gaussian elimination are sufficient.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    /// Eigenvalues in ascending order.
    pub values: Array1<T>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Array2<T>,
}

/// Cyclic Jacobi eigensolver for symmetric matrices. Only the upper triangle
/// is trusted; the input is symmetrised first.
pub fn sym_eigen<T: Real>(a: ArrayView2<T>) -> Result<SymEigen<T>, LinalgError> {
    let (n, m) = a.dim();
    if n != m {
        return Err(LinalgError::NotSquare(n, m));
    }
    let half = T::lit(0.5);
    let mut s = Array2::from_shape_fn((n, n), |(i, j)| (a[(i, j)] + a[(j, i)]) * half);
    let mut v = Array2::<T>::eye(n);
    let tol = T::epsilon() * T::epsilon();

    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let x = s[(i, j)] * s[(i, j)];
                total = total + x;
                if i != j {
                    off = off + x;
                }
            }
        }
        if off <= tol * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = s[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = s[(p, p)];
                let aqq = s[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[(p, k)];
                    let sqk = s[(q, k)];
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[(i, i)].partial_cmp(&s[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = Array1::from_iter(order.iter().map(|&i| s[(i, i)]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// `b` may hold several right-hand sides as columns.
pub fn solve<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>) -> Result<Array2<T>, LinalgError> {
    let (n, m) = a.dim();
    if n != m {
        return Err(LinalgError::NotSquare(n, m));
    }
    if b.nrows() != n {
        return Err(LinalgError::Shape(format!("rhs has {} rows, expected {n}", b.nrows())));
    }
    let k = b.ncols();
    let mut lu = a.to_owned();
    let mut x = b.to_owned();
    let scale = lu.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));

    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| lu[(i, col)].abs().partial_cmp(&lu[(j, col)].abs()).unwrap())
            .unwrap();
        if lu[(piv, col)].abs() <= tiny {
            return Err(LinalgError::Singular);
        }
        if piv != col {
            for c in 0..n {
                lu.swap((piv, c), (col, c));
            }
            for c in 0..k {
                x.swap((piv, c), (col, c));
            }
        }
        let d = lu[(col, col)];
        for r in (col + 1)..n {
            let f = lu[(r, col)] / d;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                lu[(r, c)] = lu[(r, c)] - f * lu[(col, c)];
            }
            for c in 0..k {
                x[(r, c)] = x[(r, c)] - f * x[(col, c)];
            }
        }
    }
    for col in (0..n).rev() {
        for c in 0..k {
            let mut acc = x[(col, c)];
            for j in (col + 1)..n {
                acc = acc - lu[(col, j)] * x[(j, c)];
            }
            x[(col, c)] = acc / lu[(col, col)];
        }
    }
    Ok(x)
}

/// Inverse of a square matrix.
pub fn inverse<T: Real>(a: ArrayView2<T>) -> Result<Array2<T>, LinalgError> {
    let n = a.nrows();
    solve(a, Array2::<T>::eye(n).view())
}

/// Channel covariance `x xᵀ / n` of a channels × samples block after removing
/// each row's mean.
pub fn covariance<T: Real>(x: ArrayView2<T>) -> Array2<T> {
    let n = x.ncols().max(1);
    let means = x.mean_axis(Axis(1)).unwrap_or_else(|| Array1::zeros(x.nrows()));
    let centered = &x - &means.insert_axis(Axis(1));
    centered.dot(&centered.t()) / T::from_usize_lossy(n)
}

/// Frobenius norm.
pub fn frobenius<T: Real>(a: ArrayView2<T>) -> T {
    a.iter().map(|&v| v * v).sum::<T>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_reconstructs_input() {
        let a: Array2<f64> = array![[4.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 1.0]];
        let e = sym_eigen(a.view()).unwrap();
        assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2]);
        let d = Array2::from_diag(&e.values);
        let back = e.vectors.dot(&d).dot(&e.vectors.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_f32_diagonal() {
        let a = array![[2.0f32, 0.0], [0.0, 1.0]];
        let e = sym_eigen(a.view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn solve_matches_known_solution() {
        let a: Array2<f64> = array![[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let x = array![[1.0], [-2.0], [0.5]];
        let b = a.dot(&x);
        let got = solve(a.view(), b.view()).unwrap();
        for (g, w) in got.iter().zip(x.iter()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert_eq!(solve(a.view(), Array2::eye(2).view()).unwrap_err(), LinalgError::Singular);
    }
}

//! Second-order blind identification.
//!
//! The data are whitened, symmetrised lagged covariance matrices are formed on
//! the whitened signals, and an orthogonal matrix jointly diagonalising them
//! is found with Jacobi rotations. Directions with (numerically) zero variance,
//! such as the one removed by average referencing, are dropped during
//! whitening, so the number of sources can be lower than the channel count.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EegError;
use crate::linalg::{sym_eigen, LinalgError};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SobiConfig {
    pub n_lags: usize,
    /// Relative change in off-diagonal mass below which the sweeps stop.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Whitening keeps eigen-directions above `rank_tol * largest eigenvalue`.
    pub rank_tol: f64,
}

impl Default for SobiConfig {
    fn default() -> Self {
        SobiConfig { n_lags: 50, tol: 1e-8, max_sweeps: 100, rank_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct SobiResult<T> {
    /// sources × channels
    pub unmixing: Array2<T>,
    /// channels × sources
    pub mixing: Array2<T>,
    /// sources × samples, unit variance
    pub sources: Array2<T>,
    /// Per-channel means removed before unmixing.
    pub means: Array1<T>,
    pub converged: bool,
    pub sweeps: usize,
    /// Off-diagonal Frobenius mass of the lagged set after each sweep
    /// (entry 0 is the value before the first sweep).
    pub off_history: Vec<T>,
}

impl<T: Real> SobiResult<T> {
    /// Back-projection of the chosen sources (all when `keep` is `None`).
    pub fn reconstruct(&self, keep: Option<&[usize]>) -> Array2<T> {
        let mut out = match keep {
            None => self.mixing.dot(&self.sources),
            Some(idx) => {
                let a = self.mixing.select(Axis(1), idx);
                let s = self.sources.select(Axis(0), idx);
                a.dot(&s)
            }
        };
        for (mut row, &m) in out.axis_iter_mut(Axis(0)).zip(self.means.iter()) {
            row.mapv_inplace(|v| v + m);
        }
        out
    }
}

fn off_mass<T: Real>(mats: &[Array2<T>]) -> T {
    mats.iter()
        .map(|m| {
            let mut acc = T::zero();
            for ((i, j), &v) in m.indexed_iter() {
                if i != j {
                    acc = acc + v * v;
                }
            }
            acc
        })
        .sum()
}

/// Symmetrised lagged covariances `(R_τ + R_τᵀ) / 2` for `τ = 1..=n_lags`.
pub fn lagged_covariances<T: Real>(z: ArrayView2<T>, n_lags: usize) -> Vec<Array2<T>> {
    let ns = z.ncols();
    let half = T::lit(0.5);
    (1..=n_lags)
        .into_par_iter()
        .map(|tau| {
            let a = z.slice(s![.., ..ns - tau]);
            let b = z.slice(s![.., tau..]);
            let r = a.dot(&b.t()) / T::from_usize_lossy(ns - tau);
            (&r + &r.t()) * half
        })
        .collect()
}

/// Approximate joint diagonalisation of symmetric matrices by Jacobi
/// rotations. Returns the accumulated rotation `V` (so `Vᵀ M V` is nearly
/// diagonal), the per-sweep off-diagonal mass and whether the tolerance was met.
pub fn joint_diagonalize<T: Real>(
    mats: &mut [Array2<T>],
    tol: f64,
    max_sweeps: usize,
) -> (Array2<T>, Vec<T>, bool, usize) {
    let k = mats.first().map(|m| m.nrows()).unwrap_or(0);
    let mut v = Array2::<T>::eye(k);
    let mut history = vec![off_mass(mats)];
    let min_rotation = T::epsilon().sqrt() * T::lit(1e-4);
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < max_sweeps {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let (mut g00, mut g01, mut g11) = (T::zero(), T::zero(), T::zero());
                for m in mats.iter() {
                    let d = m[(p, p)] - m[(q, q)];
                    let o = m[(p, q)] + m[(q, p)];
                    g00 = g00 + d * d;
                    g01 = g01 + d * o;
                    g11 = g11 + o * o;
                }
                let ton = g00 - g11;
                let toff = g01 + g01;
                let theta = T::lit(0.5) * toff.atan2(ton + (ton * ton + toff * toff).sqrt());
                let (c, sn) = (theta.cos(), theta.sin());
                if sn.abs() <= min_rotation {
                    continue;
                }
                rotated = true;
                for m in mats.iter_mut() {
                    for r in 0..k {
                        let (mp, mq) = (m[(r, p)], m[(r, q)]);
                        m[(r, p)] = c * mp + sn * mq;
                        m[(r, q)] = c * mq - sn * mp;
                    }
                    for col in 0..k {
                        let (mp, mq) = (m[(p, col)], m[(q, col)]);
                        m[(p, col)] = c * mp + sn * mq;
                        m[(q, col)] = c * mq - sn * mp;
                    }
                }
                for r in 0..k {
                    let (vp, vq) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * vp + sn * vq;
                    v[(r, q)] = c * vq - sn * vp;
                }
            }
        }
        let prev = *history.last().unwrap();
        let off = off_mass(mats);
        history.push(off);
        let rel = if prev > T::zero() { ((prev - off) / prev).abs().as_f64() } else { 0.0 };
        if !rotated || rel < tol || off == T::zero() {
            converged = true;
            break;
        }
    }
    (v, history, converged, sweeps)
}

/// Unmixes channels × samples data into second-order independent sources.
pub fn sobi_unmix<T: Real>(x: ArrayView2<T>, cfg: &SobiConfig) -> Result<SobiResult<T>, EegError> {
    let (nc, ns) = x.dim();
    if nc == 0 || ns <= cfg.n_lags + nc {
        return Err(EegError::TooFewSamples { samples: ns, needed: cfg.n_lags + nc + 1 });
    }
    let means = x.mean_axis(Axis(1)).expect("non-empty");
    let xc = &x - &means.view().insert_axis(Axis(1));

    let cov = xc.dot(&xc.t()) / T::from_usize_lossy(ns);
    let eig = sym_eigen(cov.view())?;
    let top = eig.values.iter().copied().fold(T::zero(), T::max);
    if !(top > T::zero()) {
        return Err(EegError::Linalg(LinalgError::Singular));
    }
    let floor = top * T::lit(cfg.rank_tol);
    let kept: Vec<usize> = (0..nc).rev().filter(|&i| eig.values[i] > floor).collect();
    let k = kept.len();
    let mut whitener = Array2::<T>::zeros((k, nc));
    let mut dewhitener = Array2::<T>::zeros((nc, k));
    for (row, &i) in kept.iter().enumerate() {
        let l = eig.values[i];
        let (inv, sq) = (T::one() / l.sqrt(), l.sqrt());
        for c in 0..nc {
            whitener[(row, c)] = eig.vectors[(c, i)] * inv;
            dewhitener[(c, row)] = eig.vectors[(c, i)] * sq;
        }
    }
    let z = whitener.dot(&xc);
    let mut lagged = lagged_covariances(z.view(), cfg.n_lags);
    let (v, off_history, converged, sweeps) = joint_diagonalize(&mut lagged, cfg.tol, cfg.max_sweeps);
    if !converged {
        log::warn!("SOBI stopped after {sweeps} sweeps without meeting tolerance {}", cfg.tol);
    }
    let unmixing = v.t().dot(&whitener);
    let mixing = dewhitener.dot(&v);
    let sources = v.t().dot(&z);
    Ok(SobiResult { unmixing, mixing, sources, means, converged, sweeps, off_history })
}

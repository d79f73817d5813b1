//! Lossless S-lemma for two quadratic forms: either some `τ ≥ 0` makes
//! `Q0 + τQ1 ⪯ 0`, or some `x` has `xᵀQ1x ≥ 0` and `xᵀQ0x > 0`.
//!
//! `g(τ) = λmax(Q0 + τQ1)` is convex; its derivative is `vᵀQ1v` for a top eigenvector `v`,
//! so the minimizer is found by bisection on the sign of that derivative.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_sym_eig, sym_norm};

const TAU_CAP: f64 = 1e8;
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SLemma {
    pub tau_star: f64,
    pub lambda_star: f64,
    /// The tolerance `1e-9(1 + ‖Q0‖ + ‖Q1‖)` against which `lambda_star` is judged.
    pub tol: f64,
    /// `lambda_star ≤ tol`: a multiplier exists.
    pub certified: bool,
    /// Unit vector. When not certified, a violation with `xᵀQ1x ≥ 0` and `xᵀQ0x > 0`;
    /// otherwise the top eigenvector at `tau_star`.
    #[serde(serialize_with = "as_slice")]
    pub x_star: DVector<f64>,
    pub sigma0: f64,
    pub sigma1: f64,
}

fn as_slice<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

fn top(q0: &DMatrix<f64>, q1: &DMatrix<f64>, tau: f64) -> (f64, DVector<f64>, f64) {
    let (l, v) = max_sym_eig(&(q0 + q1 * tau));
    let d = v.dot(&(q1 * &v));
    (l, v, d)
}

fn quad(q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(q * x))
}

/// Minimizes `λmax(Q0 + τQ1)` over `τ ∈ [0, 1e8]`. When the minimum exceeds the
/// tolerance, the returned `x_star` is a verified violation.
pub fn slemma_min_tau(q0: &DMatrix<f64>, q1: &DMatrix<f64>) -> Result<SLemma> {
    let n = q0.nrows();
    if q0.ncols() != n || q1.shape() != (n, n) || n == 0 {
        return Err(Error::Dimension(format!(
            "S-lemma needs two nonempty square matrices of equal size, got {:?} and {:?}",
            q0.shape(),
            q1.shape()
        )));
    }
    if q0.iter().chain(q1.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Matrix("S-lemma matrices have non-finite entries".into()));
    }
    let tol = TOL * (1.0 + sym_norm(q0) + sym_norm(q1));

    let tau_star = {
        let (_, _, d0) = top(q0, q1, 0.0);
        if d0 >= 0.0 {
            0.0
        } else {
            let (_, _, dcap) = top(q0, q1, TAU_CAP);
            if dcap <= 0.0 {
                TAU_CAP
            } else {
                let (mut lo, mut hi) = (0.0_f64, TAU_CAP);
                while hi - lo > 1e-12 * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if top(q0, q1, mid).2 < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (glo, ghi) = (top(q0, q1, lo).0, top(q0, q1, hi).0);
                if glo < ghi {
                    lo
                } else {
                    hi
                }
            }
        }
    };
    let (lambda_star, v, _) = top(q0, q1, tau_star);
    if lambda_star <= tol {
        return Ok(SLemma {
            tau_star,
            lambda_star,
            tol,
            certified: true,
            sigma0: quad(q0, &v),
            sigma1: quad(q1, &v),
            x_star: v,
        });
    }
    let x = refine(q0, q1, tau_star, lambda_star, tol).ok_or_else(|| {
        Error::Consistency(format!(
            "λ* = {lambda_star:e} > 0 at τ* = {tau_star:e} but no violating vector was reconstructed"
        ))
    })?;
    Ok(SLemma {
        tau_star,
        lambda_star,
        tol,
        certified: false,
        sigma0: quad(q0, &x),
        sigma1: quad(q1, &x),
        x_star: x,
    })
}

fn accept(q0: &DMatrix<f64>, q1: &DMatrix<f64>, x: &DVector<f64>, tol: f64) -> bool {
    quad(q0, x) > 0.0 && quad(q1, x) >= -tol
}

/// Searches the top eigenspace of `Q0 + τ*Q1` for a unit `x` with `xᵀQ1x ≈ 0` (or
/// `≥ 0`) and `xᵀQ0x > 0`, widening the eigenvalue cluster until one is found.
fn refine(q0: &DMatrix<f64>, q1: &DMatrix<f64>, tau: f64, lambda: f64, tol: f64) -> Option<DVector<f64>> {
    let eig = SymmetricEigen::new(q0 + q1 * tau);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = 1.0 + lambda.abs();
    for rel in [1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2] {
        let cols: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| eig.eigenvalues[i] >= lambda - rel * scale)
            .collect();
        let v = DMatrix::from_columns(&cols.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
        let a1 = v.transpose() * q1 * &v;
        let a1 = (&a1 + a1.transpose()) * 0.5;
        let e1 = SymmetricEigen::new(a1);
        let (imax, amax) = argext(&e1.eigenvalues, |a, b| a > b);
        let (imin, amin) = argext(&e1.eigenvalues, |a, b| a < b);
        let mut candidates = Vec::new();
        if amin >= 0.0 {
            let a0 = v.transpose() * q0 * &v;
            let (_, w) = max_sym_eig(&((&a0 + a0.transpose()) * 0.5));
            candidates.push(&v * w);
        } else if amax >= 0.0 {
            let (wp, wm) = (e1.eigenvectors.column(imax), e1.eigenvectors.column(imin));
            let theta = (amax / -amin).sqrt().atan();
            let w = wp * theta.cos() + wm * theta.sin();
            candidates.push(&v * &w);
            let w = wp * theta.cos() - wm * theta.sin();
            candidates.push(&v * &w);
        }
        candidates.push(&v * e1.eigenvectors.column(imax).into_owned());
        for mut x in candidates {
            x /= x.norm();
            if accept(q0, q1, &x, tol) {
                return Some(x);
            }
        }
    }
    None
}

fn argext(v: &DVector<f64>, better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if better(x, best.1) {
            best = (i, x);
        }
    }
    best
}

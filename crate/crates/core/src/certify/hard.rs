//! The cumulative condition on `G`: for every `T ≤ T_max` and every `ξ`,
//! `⟨[Gξ; ξ], N[Gξ; ξ]⟩_{ρ,T} ≥ 0`.
//!
//! In lifted coordinates `x̄[k] = ρ^{-k}x[k]` the weighted form is the unweighted form of
//! the scaled system `(A/ρ, B/ρ, C, D)`. Its Gram matrix `Q_T` is factored block by block
//! in time by the finite-horizon Riccati recursion, whose pivots `H_1 .. H_{T+1}` are
//! positive semidefinite exactly when `Q_0 .. Q_T` are. The dense Toeplitz eigenvalue
//! check is kept as an independent route.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{min_sym_eig, sym_norm, symmetrize, Mat2};
use crate::lti::{Complex64, StateSpace};
use crate::sector::{QuadSpec, Side};
use crate::signal::{quad_form, Signal, SipConfig, Weight};

const PIVOT_TOL: f64 = 1e-9;
const COUPLING_TOL: f64 = 1e-8;

/// Result of a hard-condition check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HardCheck {
    Pass,
    Fail(HardFailure),
}

impl HardCheck {
    pub fn passed(&self) -> bool {
        matches!(self, HardCheck::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardFailure {
    /// Smallest failing horizon `T`.
    pub horizon: usize,
    /// `ξ` on `0..=T` with `⟨[Gξ; ξ], N[Gξ; ξ]⟩_{ρ,T} < 0`.
    pub xi: Signal,
    /// The form re-evaluated through the signal layer.
    pub value: f64,
    /// The negative eigenvalue that triggered the failure.
    pub eigenvalue: f64,
    /// `value < 0` on re-evaluation.
    pub verified: bool,
}

pub(crate) fn check_square(g: &StateSpace) -> Result<()> {
    if g.inputs() != g.outputs() {
        return Err(Error::Dimension(format!(
            "the loop needs a square G, got {} outputs and {} inputs",
            g.outputs(),
            g.inputs()
        )));
    }
    Ok(())
}

fn check_n(n: &QuadSpec) -> Result<()> {
    if n.side() != Side::G {
        return Err(Error::Convention("the hard condition takes a G-side N".into()));
    }
    Ok(())
}

struct StageCost {
    sxx: DMatrix<f64>,
    sxi: DMatrix<f64>,
    sii: DMatrix<f64>,
}

/// Per-step cost `N11|y|² + 2 N12 ⟨y, ξ⟩ + N22|ξ|²` with `y = Cx + Dξ`.
fn stage_cost(g: &StateSpace, n: &Mat2) -> StageCost {
    let [[n11, n12], [_, n22]] = *n;
    let (c, d) = (g.c(), g.d());
    let m = g.inputs();
    let ct = c.transpose();
    let mut sii = d.transpose() * d * n11 + (d + d.transpose()) * n12 + DMatrix::identity(m, m) * n22;
    symmetrize(&mut sii);
    StageCost {
        sxx: &ct * c * n11,
        sxi: &ct * d * n11 + &ct * n12,
        sii,
    }
}

enum Recursion {
    Pass,
    Fail {
        /// 1-based pivot index; the failing horizon is `pivot - 1`.
        pivot: usize,
        eigenvalue: f64,
        direction: DVector<f64>,
        gains: Vec<DMatrix<f64>>,
    },
    /// A pivot direction with numerically zero curvature but nonzero coupling to the state.
    Ambiguous { pivot: usize },
}

/// Runs the pivots `H_1 .. H_steps` on the lifted system.
fn riccati(gs: &StateSpace, n: &Mat2, steps: usize, keep_gains: bool) -> Result<Recursion> {
    let (a, b) = (gs.a(), gs.b());
    let cost = stage_cost(gs, n);
    let ns = gs.states();
    let at = a.transpose();
    let bt = b.transpose();
    let sii_norm = sym_norm(&cost.sii);
    let mut p = DMatrix::<f64>::zeros(ns, ns);
    let mut gains = Vec::new();
    for j in 1..=steps {
        let pb = &p * b;
        let mut bpb = &bt * &pb;
        symmetrize(&mut bpb);
        let mut h = &cost.sii + &bpb;
        symmetrize(&mut h);
        let l = &cost.sxi + &at * &pb;
        if !h.iter().chain(l.iter()).all(|v| v.is_finite()) {
            return Err(Error::Numerics(format!("Riccati pivot {j} is not finite")));
        }
        let tol = PIVOT_TOL * (1.0 + sii_norm + sym_norm(&bpb));
        let eig = SymmetricEigen::new(h);
        let (imin, lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        if lmin < -tol {
            return Ok(Recursion::Fail {
                pivot: j,
                eigenvalue: lmin,
                direction: eig.eigenvectors.column(imin).into_owned(),
                gains,
            });
        }
        let l_norm = l.norm();
        let mut h_pinv = DMatrix::<f64>::zeros(h_dim(&eig), h_dim(&eig));
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            let w = eig.eigenvectors.column(i);
            if lam > tol {
                h_pinv += w * w.transpose() / lam;
            } else if ns > 0 && (&l * w).norm() > COUPLING_TOL * (1.0 + l_norm) {
                return Ok(Recursion::Ambiguous { pivot: j });
            }
        }
        let k = &h_pinv * l.transpose();
        p = &cost.sxx + &at * &p * a - &l * &k;
        symmetrize(&mut p);
        if keep_gains {
            gains.push(k);
        }
    }
    Ok(Recursion::Pass)
}

fn h_dim(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> usize {
    eig.eigenvalues.len()
}

/// Builds the minimizing input for the failing pivot `j`: `ξ̄[0] = v`, then the stored
/// feedback gains drive the remaining `j - 1` steps. Returned in lifted coordinates.
fn pivot_witness(gs: &StateSpace, pivot: usize, v: &DVector<f64>, gains: &[DMatrix<f64>]) -> Signal {
    let m = gs.inputs();
    let horizon = pivot - 1;
    let mut xi = Signal::zeros(m, horizon);
    xi.at_mut(0).copy_from_slice(v.as_slice());
    let mut x = gs.b() * v;
    for k in 1..=horizon {
        // steps remaining at time k: pivot - k; gains[i] belongs to pivot i + 1
        let gain = &gains[pivot - k - 1];
        let u = -(gain * &x);
        xi.at_mut(k).copy_from_slice(u.as_slice());
        x = gs.a() * &x + gs.b() * &u;
    }
    xi
}

fn evaluate(g: &StateSpace, n: &Mat2, xi: &Signal, weight: Weight) -> Result<f64> {
    let y = g.respond(xi)?;
    quad_form(&y, xi, n, &SipConfig::new(xi.horizon(), weight))
}

/// `Q_T` on the lifted Toeplitz operator, and its tolerance `1e-9(1 + ‖Q_T‖)`.
fn dense_gram(g: &StateSpace, n: &Mat2, horizon: usize, weight: Weight) -> Result<(DMatrix<f64>, f64)> {
    let [[n11, n12], [_, n22]] = *n;
    let t = g.toeplitz(horizon, weight)?;
    let dim = t.ncols();
    let mut q = t.transpose() * &t * n11 + (&t + t.transpose()) * n12 + DMatrix::identity(dim, dim) * n22;
    symmetrize(&mut q);
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics(format!("Gram matrix at T = {horizon} is not finite")));
    }
    let tol = PIVOT_TOL * (1.0 + sym_norm(&q));
    Ok((q, tol))
}

fn dense_failure(g: &StateSpace, n: &Mat2, horizon: usize, weight: Weight) -> Result<Option<(f64, Signal)>> {
    let (q, tol) = dense_gram(g, n, horizon, weight)?;
    let (lmin, v) = min_sym_eig(&q);
    if lmin < -tol {
        let lifted = Signal::from_stacked(g.inputs(), v.as_slice().to_vec())?;
        Ok(Some((lmin, lifted.unlift(weight))))
    } else {
        Ok(None)
    }
}

fn smallest_dense_failure(
    g: &StateSpace,
    n: &Mat2,
    horizons: std::ops::RangeInclusive<usize>,
    weight: Weight,
) -> Result<Option<(usize, f64, Signal)>> {
    let found: Vec<Option<(usize, f64, Signal)>> = horizons
        .into_par_iter()
        .map(|t| dense_failure(g, n, t, weight).map(|f| f.map(|(l, xi)| (t, l, xi))))
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().min_by_key(|f| f.0))
}

fn failure(g: &StateSpace, n: &Mat2, horizon: usize, eigenvalue: f64, xi: Signal, weight: Weight) -> Result<HardFailure> {
    let value = evaluate(g, n, &xi, weight)?;
    Ok(HardFailure {
        horizon,
        xi,
        value,
        eigenvalue,
        verified: value < 0.0,
    })
}

/// Smallest failing horizon, without building a witness.
pub(crate) fn first_failing_horizon(g: &StateSpace, n: &Mat2, t_max: usize, weight: Weight) -> Result<Option<usize>> {
    let gs = g.rho_scale(weight);
    match riccati(&gs, n, t_max + 1, false)? {
        Recursion::Pass => Ok(None),
        Recursion::Fail { pivot, .. } => Ok(Some(pivot - 1)),
        Recursion::Ambiguous { pivot } => {
            Ok(smallest_dense_failure(g, n, (pivot - 1)..=t_max, weight)?.map(|f| f.0))
        }
    }
}

/// Checks the cumulative condition on `G` for every horizon `0..=T_max` under the weight.
/// On failure returns the smallest failing `T` and an input `ξ` on which the form is negative.
pub fn check_hard_condition(g: &StateSpace, n: &QuadSpec, t_max: usize, weight: Weight) -> Result<HardCheck> {
    check_square(g)?;
    check_n(n)?;
    let nm = n.matrix();
    let gs = g.rho_scale(weight);
    match riccati(&gs, nm, t_max + 1, true)? {
        Recursion::Pass => Ok(HardCheck::Pass),
        Recursion::Fail {
            pivot,
            eigenvalue,
            direction,
            gains,
        } => {
            let horizon = pivot - 1;
            let xi = pivot_witness(&gs, pivot, &direction, &gains).unlift(weight);
            let f = failure(g, nm, horizon, eigenvalue, xi, weight)?;
            if f.verified {
                return Ok(HardCheck::Fail(f));
            }
            match dense_failure(g, nm, horizon, weight)? {
                Some((l, xi)) => {
                    let dense = failure(g, nm, horizon, l, xi, weight)?;
                    Ok(HardCheck::Fail(if dense.verified { dense } else { f }))
                }
                None => Ok(HardCheck::Fail(f)),
            }
        }
        Recursion::Ambiguous { pivot } => match smallest_dense_failure(g, nm, (pivot - 1)..=t_max, weight)? {
            None => Ok(HardCheck::Pass),
            Some((t, l, xi)) => Ok(HardCheck::Fail(failure(g, nm, t, l, xi, weight)?)),
        },
    }
}

/// The same check by eigenvalues of the dense matrices
/// `Q_T = N11 𝒢ᵀ𝒢 + N12 (𝒢 + 𝒢ᵀ) + N22 I`, with `𝒢` the lifted Toeplitz operator and
/// tolerance `1e-9(1 + ‖Q_T‖)`. Only meaningful while `𝒢` stays moderately conditioned.
pub fn check_hard_condition_dense(g: &StateSpace, n: &QuadSpec, t_max: usize, weight: Weight) -> Result<HardCheck> {
    check_square(g)?;
    check_n(n)?;
    let nm = n.matrix();
    match smallest_dense_failure(g, nm, 0..=t_max, weight)? {
        None => Ok(HardCheck::Pass),
        Some((t, l, xi)) => Ok(HardCheck::Fail(failure(g, nm, t, l, xi, weight)?)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyCheck {
    pub pass: bool,
    /// Smallest eigenvalue of `H(ω)` over the grid.
    pub min_eigenvalue: f64,
    pub omega_at_min: f64,
}

/// Screens `H(ω) = N11 Ĝ*Ĝ + N12 (Ĝ + Ĝ*) + N22 I ⪰ 0` at `ω = 2πj/grid`, with `Ĝ` the
/// frequency response of the ρ-scaled system. Not a certificate.
pub fn check_frequency_condition(g: &StateSpace, n: &QuadSpec, grid: usize, weight: Weight) -> Result<FrequencyCheck> {
    check_square(g)?;
    check_n(n)?;
    if grid == 0 {
        return Err(Error::Parameter("frequency grid must have at least one point".into()));
    }
    let gs = g.rho_scale(weight);
    if !gs.is_schur()? {
        return Err(Error::FrequencyDomain(format!(
            "the scaled system has spectral radius {} ≥ 1",
            gs.spectral_radius()?
        )));
    }
    let [[n11, n12], [_, n22]] = *n.matrix();
    let m = g.inputs();
    let points: Vec<(f64, f64, f64)> = (0..grid)
        .into_par_iter()
        .map(|j| {
            let omega = 2.0 * std::f64::consts::PI * j as f64 / grid as f64;
            let z = Complex64::from_polar(1.0, omega);
            let gh = gs.transfer_eval(z)?;
            let ga = gh.adjoint();
            let id = DMatrix::<Complex64>::identity(m, m);
            let h = &ga * &gh * Complex64::from(n11)
                + (&gh + &ga) * Complex64::from(n12)
                + id * Complex64::from(n22);
            let h = (&h + h.adjoint()) * Complex64::from(0.5);
            let eig = h.symmetric_eigenvalues();
            let lmin = eig.iter().fold(f64::INFINITY, |a, &v| a.min(v));
            let scale = eig.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
            Ok((omega, lmin, PIVOT_TOL * (1.0 + scale)))
        })
        .collect::<Result<_>>()?;
    let pass = points.iter().all(|&(_, l, tol)| l >= -tol);
    let &(omega_at_min, min_eigenvalue, _) = points
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is nonempty");
    Ok(FrequencyCheck {
        pass,
        min_eigenvalue,
        omega_at_min,
    })
}

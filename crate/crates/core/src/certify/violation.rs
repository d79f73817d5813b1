//! Counterexamples to a gain bound.
//!
//! At horizon `T` the loop trajectories are parametrized by free `(u1, u2, y2)`, with
//! `e1 = u1 + y2`, `y1 = 𝒢e1`, `e2 = u2 + y1`. The gain violation
//! `σ0 = ‖y‖² - γ²‖u‖²` and the sector constraint on `Φ`, `σ1 = ⟨[e2; y2], M[e2; y2]⟩`,
//! are quadratic forms in those coordinates; the S-lemma either certifies that
//! `σ1 ≥ 0 ⟹ σ0 ≤ 0` or returns a trajectory with `σ1 ≥ 0` and `σ0 > 0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::hard::check_square;
use super::slemma::slemma_min_tau;
use crate::error::{Error, Result};
use crate::lti::StateSpace;
use crate::sector::{Feedback, QuadSpec, Side};
use crate::signal::{pair_seminorm, quad_form, Signal, SipConfig, Weight};

const RESIDUAL_TOL: f64 = 1e-9;

/// Two channels of the loop, serialized as `[first, second]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalPair(pub Signal, pub Signal);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationWitness {
    pub gamma_target: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub rho: f64,
    pub feedback: Feedback,
    /// `‖y‖² - γ²‖u‖²`, positive.
    pub sigma0: f64,
    /// `⟨[e2; y2], M[e2; y2]⟩`, nonnegative up to rounding.
    pub sigma1: f64,
    pub u: SignalPair,
    pub y: SignalPair,
    pub e: SignalPair,
    /// `‖y‖/‖u‖`; infinite (serialized as null) when `u = 0`.
    pub ratio: f64,
    pub tau_star: f64,
    pub lambda_star: f64,
    /// `y2[k] = c[k]·e2[k]` componentwise for the recorded `gains`; otherwise the
    /// witness only exists as a relation.
    pub operator_realizable: bool,
    pub gains: Option<Vec<Vec<f64>>>,
}

fn block_cols(d: usize, parts: &[(usize, &DMatrix<f64>)]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, 3 * d);
    for (slot, m) in parts {
        out.view_mut((0, slot * d), (d, d)).copy_from(*m);
    }
    out
}

fn quad(q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(q * x))
}

/// Searches for a loop trajectory at horizon `T` that respects the `M` constraint on `Φ`
/// and has `‖y‖_{ρ,T} > γ‖u‖_{ρ,T}`. `None` when the S-lemma certifies there is none.
pub fn find_violation(
    g: &StateSpace,
    m: &QuadSpec,
    gamma: f64,
    horizon: usize,
    weight: Weight,
) -> Result<Option<ViolationWitness>> {
    if m.side() != Side::Phi {
        return Err(Error::Convention("find_violation takes a Phi-side M".into()));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!("gamma must be positive and finite, got {gamma}")));
    }
    check_square(g)?;
    let negative = m.feedback() == Feedback::Negative;
    let plant = if negative { g.negated() } else { g.clone() };
    let t = plant.toeplitz(horizon, weight)?;
    let d = t.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let u1 = block_cols(d, &[(0, &id)]);
    let u2 = block_cols(d, &[(1, &id)]);
    let y2 = block_cols(d, &[(2, &id)]);
    let y1 = block_cols(d, &[(0, &t), (2, &t)]);
    let e2 = block_cols(d, &[(0, &t), (1, &id), (2, &t)]);
    let [[m11, m12], [_, m22]] = *m.matrix();
    let g2 = gamma * gamma;
    let q0 = y1.transpose() * &y1 + y2.transpose() * &y2 - (u1.transpose() * &u1 + u2.transpose() * &u2) * g2;
    let cross = e2.transpose() * &y2;
    let q1 = e2.transpose() * &e2 * m11 + (&cross + cross.transpose()) * m12 + y2.transpose() * &y2 * m22;
    let s = slemma_min_tau(&q0, &q1)?;
    if s.certified {
        return Ok(None);
    }
    let x = with_input(&q0, &q1, s.x_star.clone(), 2 * d);

    let part = |i: usize| -> Result<Signal> {
        Ok(Signal::from_stacked(g.inputs(), x.rows(i * d, d).iter().copied().collect())?.unlift(weight))
    };
    let (mut u1s, u2s, y2s) = (part(0)?, part(1)?, part(2)?);
    let mut e1s = u1s.axpy(1.0, &y2s)?;
    let y1s = plant.respond(&e1s)?;
    let e2s = u2s.axpy(1.0, &y1s)?;
    if negative {
        u1s = u1s.scale(-1.0);
        e1s = e1s.scale(-1.0);
    }
    verify_loop(g, negative, &u1s, &u2s, &e1s, &e2s, &y1s, &y2s)?;

    let cfg = SipConfig::new(horizon, weight);
    let ny = pair_seminorm(&y1s, &y2s, &cfg)?;
    let nu = pair_seminorm(&u1s, &u2s, &cfg)?;
    let sigma0 = ny * ny - g2 * nu * nu;
    let sigma1 = quad_form(&e2s, &y2s, m.matrix(), &cfg)?;
    let n2 = crate::signal::sip(&e2s, &e2s, &cfg)? + crate::signal::sip(&y2s, &y2s, &cfg)?;
    let mscale = m11.abs().max(m12.abs()).max(m22.abs());
    if !(sigma0 > 0.0) || sigma1 < -RESIDUAL_TOL * (1.0 + mscale) * n2.max(1e-300) {
        return Err(Error::Consistency(format!(
            "reconstructed witness fails re-evaluation: sigma0 = {sigma0:e}, sigma1 = {sigma1:e}"
        )));
    }
    let ratio = if nu > 0.0 { ny / nu } else { f64::INFINITY };
    let gains = realize(&e2s, &y2s);
    Ok(Some(ViolationWitness {
        gamma_target: gamma,
        horizon,
        rho: weight.rho(),
        feedback: m.feedback(),
        sigma0,
        sigma1,
        operator_realizable: gains.is_some(),
        gains,
        u: SignalPair(u1s, u2s),
        y: SignalPair(y1s, y2s),
        e: SignalPair(e1s, e2s),
        ratio,
        tau_star: s.tau_star,
        lambda_star: s.lambda_star,
    }))
}

/// A witness with `u = 0` is a free oscillation of the loop. When the violation is strict,
/// nudging the input coordinates keeps it a violation and gives a finite gain ratio.
fn with_input(q0: &DMatrix<f64>, q1: &DMatrix<f64>, x: DVector<f64>, n_input: usize) -> DVector<f64> {
    let input_norm = x.rows(0, n_input).norm();
    if input_norm > 1e-6 * x.norm() {
        return x;
    }
    for step in [0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 1e-4, 1e-5, 1e-6] {
        for i in 0..n_input {
            for sign in [1.0, -1.0] {
                let mut z = x.clone();
                z[i] += sign * step;
                if quad(q0, &z) > 0.0 && quad(q1, &z) >= 0.0 {
                    return z.normalize();
                }
            }
        }
    }
    x
}

#[allow(clippy::too_many_arguments)]
fn verify_loop(
    g: &StateSpace,
    negative: bool,
    u1: &Signal,
    u2: &Signal,
    e1: &Signal,
    e2: &Signal,
    y1: &Signal,
    y2: &Signal,
) -> Result<()> {
    let sign = if negative { -1.0 } else { 1.0 };
    let scale = [u1, u2, e1, e2, y1, y2]
        .iter()
        .flat_map(|s| s.stacked().iter())
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = RESIDUAL_TOL * (1.0 + scale);
    let check = |name: &str, lhs: &Signal, rhs: Signal| -> Result<()> {
        let r = lhs.axpy(-1.0, &rhs)?.stacked().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if r > tol {
            return Err(Error::Consistency(format!("witness residual of {name} is {r:e}")));
        }
        Ok(())
    };
    check("e1 = u1 + y2", e1, u1.axpy(sign, y2)?)?;
    check("y1 = G e1", y1, g.respond(e1)?)?;
    check("e2 = u2 + y1", e2, u2.axpy(1.0, y1)?)?;
    Ok(())
}

fn realize(e2: &Signal, y2: &Signal) -> Option<Vec<Vec<f64>>> {
    let scale = e2
        .stacked()
        .iter()
        .chain(y2.stacked())
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    let tiny = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut gains = Vec::with_capacity(e2.len());
    for k in 0..e2.len() {
        let mut row = Vec::with_capacity(e2.dim());
        for (e, y) in e2.at(k).iter().zip(y2.at(k)) {
            if e.abs() > tiny {
                row.push(y / e);
            } else if y.abs() <= tiny {
                row.push(0.0);
            } else {
                return None;
            }
        }
        gains.push(row);
    }
    Some(gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::certify;

    fn small_gain_m(gamma2: f64) -> QuadSpec {
        QuadSpec::phi([[gamma2, 0.0], [0.0, -1.0 / gamma2]]).unwrap()
    }

    fn static_gain(d: f64) -> StateSpace {
        StateSpace::static_gain(DMatrix::from_element(1, 1, d)).unwrap()
    }

    #[test]
    fn gain_two_loop_breaks_any_bound() {
        for gamma in [1.0, 10.0, 100.0] {
            let w = find_violation(&static_gain(2.0), &small_gain_m(1.0), gamma, 0, Weight::UNIT)
                .unwrap()
                .expect("witness");
            assert!(w.sigma0 > 0.0);
            assert!(w.sigma1 >= -1e-9);
            assert!(w.ratio > gamma);
        }
    }

    #[test]
    fn half_gain_loop_has_no_violation_at_certified_gamma() {
        let m = small_gain_m(1.0);
        let c = certify(&static_gain(0.5), &m, 16, Weight::UNIT).unwrap();
        let gamma = c.certificate().unwrap().gamma;
        for t in [0, 1, 4, 16] {
            assert!(find_violation(&static_gain(0.5), &m, gamma, t, Weight::UNIT).unwrap().is_none());
        }
    }

    #[test]
    fn dynamic_negative_feedback_witness() {
        let g = StateSpace::siso(&[0.5], &[1.0], &[1.0], 0.0).unwrap();
        // under negative feedback a gain c in [-1, 0] moves the pole to 0.5 - c, up to 1.5
        let m = crate::sector::sector_interval_to_m(-1.0, 0.0).unwrap().with_feedback(Feedback::Negative);
        let w = find_violation(&g, &m, 5.0, 12, Weight::UNIT).unwrap().expect("witness");
        assert!(w.ratio > 5.0);
        assert!(w.sigma1 >= -1e-9);
    }
}

//! Finite-horizon stability certificates and their counterexamples.
//!
//! A certificate is a G-side `N` with `M + N ≺ 0` such that `G` satisfies the cumulative
//! `N` condition on every horizon up to `T_max`. The search runs over the family
//! `N(τ) = -(1/τ)I - M`, for which `M + N(τ) = -(1/τ)I` and `N(τ)` grows with `τ`, so
//! feasibility is monotone in `τ` and a bisection on `log τ` finds the threshold.
//! When no `τ` works, [`find_violation`] produces a loop trajectory that respects the
//! sector constraint on `Φ` and breaks any requested gain bound.

mod hard;
mod rate;
mod slemma;
mod violation;

pub use hard::{check_frequency_condition, check_hard_condition, check_hard_condition_dense, FrequencyCheck, HardCheck, HardFailure};
pub use rate::{best_rate, gradient_method_lure, rate_grid};
pub use slemma::{slemma_min_tau, SLemma};
pub use violation::{find_violation, SignalPair, ViolationWitness};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm2, Mat2};
use crate::lti::StateSpace;
use crate::sector::{compatibility, flip_sign, indefinite, positive_form, Feedback, QuadSpec, Side};
use crate::signal::Weight;

/// `η`, `r`, `q` and the resulting gain bound `γ = (r + sqrt(r² + ηq))/η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainBound {
    pub eta: f64,
    pub r: f64,
    pub q: f64,
    pub gamma: f64,
}

/// Closed-loop gain bound implied by a compatible pair.
pub fn gamma_bound(m: &QuadSpec, n: &QuadSpec) -> Result<GainBound> {
    let c = compatibility(m, n)?;
    if !c.ok {
        return Err(Error::Compatibility(format!(
            "M + N is not negative definite (λmax = {})",
            -c.eta
        )));
    }
    let mm = m.matrix();
    let nn = positive_form(n);
    let eta = c.eta;
    let r = spectral_norm2(&[[nn[0][1], mm[0][0]], [nn[1][1], mm[1][0]]]);
    let q = nn[1][1].abs().max(mm[0][0].abs());
    let gamma = (r + (r * r + eta * q).sqrt()) / eta;
    Ok(GainBound { eta, r, q, gamma })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ToeplitzExact,
    FrequencyAsymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub method: Method,
    /// `τ` of the issued certificate, slightly above the threshold `tau_star`.
    pub tau: f64,
    pub tau_star: f64,
    pub eta: f64,
    pub r: f64,
    pub q: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub rho: f64,
    /// `N(τ)` in the feedback convention of `M` (`Ñ` for negative feedback).
    #[serde(rename = "N")]
    pub n: QuadSpec,
    #[serde(rename = "M")]
    pub m: QuadSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Infeasible {
    /// The largest `τ` tried.
    pub tau: f64,
    pub horizon: usize,
    pub rho: f64,
    /// Failure of the hard condition at the largest `τ`.
    pub witness: HardFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CertifyOutcome {
    Certified(Certificate),
    Infeasible(Infeasible),
}

impl CertifyOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            CertifyOutcome::Certified(c) => Some(c),
            CertifyOutcome::Infeasible(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Bisection stops once `hi/lo ≤ 1 + rel_tol`.
    pub rel_tol: f64,
    pub max_steps: usize,
    /// The certificate is issued at `τ*(1 + margin)`.
    pub margin: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tau_min: 1e-8,
            tau_max: 1e8,
            rel_tol: 1e-6,
            max_steps: 200,
            margin: 1e-3,
        }
    }
}

pub const DEFAULT_HORIZON: usize = 64;
pub const DEFAULT_GRID: usize = 1024;

/// `N(τ) = -(1/τ)I - M` in the positive-feedback convention.
pub fn n_of_tau(m: &QuadSpec, tau: f64) -> Mat2 {
    let k = m.matrix();
    let s = 1.0 / tau;
    [[-s - k[0][0], -k[0][1]], [-k[1][0], -s - k[1][1]]]
}

/// `N(τ)` as a G-side spec in the convention of `M`.
fn n_spec(m: &QuadSpec, tau: f64) -> Result<QuadSpec> {
    let n = QuadSpec::new(n_of_tau(m, tau), Side::G, Feedback::Positive)?;
    Ok(match m.feedback() {
        Feedback::Positive => n,
        Feedback::Negative => flip_sign(&n),
    })
}

fn check_m(m: &QuadSpec) -> Result<()> {
    if m.side() != Side::Phi {
        return Err(Error::Convention("certify takes a Phi-side M".into()));
    }
    Ok(())
}

fn passes(g: &StateSpace, m: &QuadSpec, tau: f64, t_max: usize, weight: Weight) -> Result<bool> {
    let n = n_spec(m, tau)?;
    Ok(hard::first_failing_horizon(g, n.matrix(), t_max, weight)?.is_none())
}

/// [`certify_with`] under the default options.
pub fn certify(g: &StateSpace, m: &QuadSpec, t_max: usize, weight: Weight) -> Result<CertifyOutcome> {
    certify_with(g, m, t_max, weight, &CertifyOptions::default())
}

/// Smallest `τ` (to a relative factor) for which `N(τ)` passes the hard condition on
/// every horizon up to `T_max`, and the certificate issued just above it.
pub fn certify_with(
    g: &StateSpace,
    m: &QuadSpec,
    t_max: usize,
    weight: Weight,
    opts: &CertifyOptions,
) -> Result<CertifyOutcome> {
    check_m(m)?;
    hard::check_square(g)?;
    if !(opts.tau_min > 0.0 && opts.tau_min < opts.tau_max) {
        return Err(Error::Parameter("need 0 < tau_min < tau_max".into()));
    }
    if !indefinite(m) {
        log::warn!("M is negative semidefinite; an infeasible result does not imply a violation exists");
    }
    if !passes(g, m, opts.tau_max, t_max, weight)? {
        let n = n_spec(m, opts.tau_max)?;
        let HardCheck::Fail(witness) = check_hard_condition(g, &n, t_max, weight)? else {
            return Err(Error::Consistency("hard check passed on the second evaluation".into()));
        };
        return Ok(CertifyOutcome::Infeasible(Infeasible {
            tau: opts.tau_max,
            horizon: t_max,
            rho: weight.rho(),
            witness,
        }));
    }
    let tau_star = if passes(g, m, opts.tau_min, t_max, weight)? {
        opts.tau_min
    } else {
        let (mut lo, mut hi) = (opts.tau_min.ln(), opts.tau_max.ln());
        let stop = opts.rel_tol.ln_1p();
        let mut steps = 0;
        while hi - lo > stop && steps < opts.max_steps {
            let mid = 0.5 * (lo + hi);
            if passes(g, m, mid.exp(), t_max, weight)? {
                hi = mid;
            } else {
                lo = mid;
            }
            steps += 1;
        }
        hi.exp()
    };
    let tau = tau_star * (1.0 + opts.margin);
    let n = n_spec(m, tau)?;
    let bound = gamma_bound(m, &n)?;
    Ok(CertifyOutcome::Certified(Certificate {
        method: Method::ToeplitzExact,
        tau,
        tau_star,
        eta: bound.eta,
        r: bound.r,
        q: bound.q,
        gamma: bound.gamma,
        horizon: t_max,
        rho: weight.rho(),
        n,
        m: *m,
    }))
}

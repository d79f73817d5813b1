//! Exponential rate search: the smallest `ρ` for which the weighted loop is certified.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{certify, CertifyOutcome};
use crate::error::{Error, Result};
use crate::lti::StateSpace;
use crate::sector::{sector_interval_to_m, QuadSpec};
use crate::signal::Weight;

fn certified(g: &StateSpace, m: &QuadSpec, rho: f64, t_max: usize) -> Result<bool> {
    Ok(matches!(certify(g, m, t_max, Weight::new(rho)?)?, CertifyOutcome::Certified(_)))
}

/// Bisection on `ρ ∈ [rho_lo, rho_hi]` for the smallest certified rate, to within `tol`.
/// Certifiability is treated as monotone in `ρ`; [`rate_grid`] gives the sweep that
/// cross-checks this. `None` when `rho_hi` itself is not certified.
pub fn best_rate(g: &StateSpace, m: &QuadSpec, rho_lo: f64, rho_hi: f64, tol: f64, t_max: usize) -> Result<Option<f64>> {
    if !(0.0 < rho_lo && rho_lo < rho_hi && rho_hi <= 1.0) {
        return Err(Error::Parameter(format!(
            "need 0 < rho_lo < rho_hi <= 1, got [{rho_lo}, {rho_hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    if !certified(g, m, rho_hi, t_max)? {
        return Ok(None);
    }
    if certified(g, m, rho_lo, t_max)? {
        return Ok(Some(rho_lo));
    }
    let (mut lo, mut hi) = (rho_lo, rho_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if certified(g, m, mid, t_max)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    debug_assert!(certified(g, m, hi, t_max)? && !certified(g, m, lo, t_max)?);
    Ok(Some(hi))
}

/// Certification status at each `ρ` of the grid.
pub fn rate_grid(g: &StateSpace, m: &QuadSpec, rhos: &[f64], t_max: usize) -> Result<Vec<(f64, bool)>> {
    rhos.par_iter()
        .map(|&rho| Ok((rho, certified(g, m, rho, t_max)?)))
        .collect()
}

/// The gradient iteration `x[k+1] = x[k] - α∇f(x[k])` as a loop: `G = (1, -α, 1, 0)` and
/// `∇f` in the sector `[m, L]`.
pub fn gradient_method_lure(m: f64, l: f64, alpha: f64) -> Result<(StateSpace, QuadSpec)> {
    if !(0.0 < m && m < l && l.is_finite()) {
        return Err(Error::Parameter(format!("need 0 < m < L, got m = {m}, L = {l}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("step size must be positive, got {alpha}")));
    }
    let one = DMatrix::from_element(1, 1, 1.0);
    let g = StateSpace::new(
        one.clone(),
        DMatrix::from_element(1, 1, -alpha),
        one,
        DMatrix::zeros(1, 1),
    )?;
    Ok((g, sector_interval_to_m(m, l)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_lure_realization() {
        let (g, m) = gradient_method_lure(1.0, 10.0, 2.0 / 11.0).unwrap();
        assert_eq!(g.a()[(0, 0)], 1.0);
        assert_eq!(g.b()[(0, 0)], -2.0 / 11.0);
        assert_eq!(*m.matrix(), [[-10.0, 5.5], [5.5, -1.0]]);
        assert!(gradient_method_lure(2.0, 1.0, 0.1).is_err());
        assert!(gradient_method_lure(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn rate_bisection_matches_grid() {
        let (g, m) = gradient_method_lure(1.0, 4.0, 0.4).unwrap();
        // worst-case contraction max(|1 - 0.4|, |1 - 1.6|) = 0.6
        let rho = best_rate(&g, &m, 0.3, 1.0, 1e-3, 32).unwrap().unwrap();
        assert!((rho - 0.6).abs() < 1e-2, "rho = {rho}");
        let grid: Vec<f64> = (0..15).map(|i| 0.3 + 0.05 * i as f64).collect();
        for (r, ok) in rate_grid(&g, &m, &grid, 32).unwrap() {
            assert_eq!(ok, r >= rho, "grid disagrees with bisection at rho = {r}");
        }
        let hi = best_rate(&g, &m, 0.3, 0.9, 1e-3, 32).unwrap().unwrap();
        assert!(hi <= 0.9);
    }

    #[test]
    fn no_rate_when_upper_end_fails() {
        // α = 0.5 with L = 10: |1 - αL| = 4 > 1
        let (g, m) = gradient_method_lure(1.0, 10.0, 0.5).unwrap();
        assert_eq!(best_rate(&g, &m, 0.5, 1.0, 1e-3, 16).unwrap(), None);
    }
}

//! Fixed benchmark instances.

use nalgebra::DMatrix;
use sector_core::{sector_interval_to_m, QuadSpec, StateSpace};

/// Lightly damped chain of `order` first-order sections with poles at `pole`.
pub fn chain(order: usize, pole: f64) -> StateSpace {
    let a = DMatrix::from_fn(order, order, |i, j| {
        if i == j {
            pole
        } else if i == j + 1 {
            1.0 - pole
        } else {
            0.0
        }
    });
    let mut b = DMatrix::zeros(order, 1);
    b[(0, 0)] = 1.0 - pole;
    let mut c = DMatrix::zeros(1, order);
    c[(0, order - 1)] = 0.5;
    StateSpace::new(a, b, c, DMatrix::from_element(1, 1, 0.1)).expect("valid chain")
}

/// Sector `[0, b]` on the nonlinearity.
pub fn interval(b: f64) -> QuadSpec {
    sector_interval_to_m(0.0, b).expect("valid interval")
}

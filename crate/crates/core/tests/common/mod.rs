#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sector_core::{Complex64, QuadSpec, Signal, StateSpace};

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Block-diagonal realization with real poles and rotation blocks of modulus ≤ `radius`.
pub fn random_schur_siso<R: Rng>(rng: &mut R, order: usize, radius: f64) -> StateSpace {
    let mut a = DMatrix::zeros(order, order);
    let mut i = 0;
    while i < order {
        let r = radius * rng.random::<f64>();
        if i + 1 < order && rng.random_bool(0.5) {
            let th = rng.random_range(0.0..std::f64::consts::PI);
            a[(i, i)] = r * th.cos();
            a[(i, i + 1)] = -r * th.sin();
            a[(i + 1, i)] = r * th.sin();
            a[(i + 1, i + 1)] = r * th.cos();
            i += 2;
        } else {
            a[(i, i)] = if rng.random_bool(0.5) { r } else { -r };
            i += 1;
        }
    }
    let b = DMatrix::from_fn(order, 1, |_, _| normal(rng));
    let c = DMatrix::from_fn(1, order, |_, _| normal(rng));
    let d = DMatrix::from_element(1, 1, 0.5 * normal(rng));
    StateSpace::new(a, b, c, d).unwrap()
}

/// `max |G(e^{iω})|` over `points` equispaced frequencies.
pub fn peak_gain(g: &StateSpace, points: usize) -> f64 {
    (0..points)
        .map(|j| {
            let w = 2.0 * std::f64::consts::PI * j as f64 / points as f64;
            g.transfer_eval(Complex64::from_polar(1.0, w)).unwrap()[(0, 0)].norm()
        })
        .fold(0.0, f64::max)
}

/// Largest singular value of the unweighted Toeplitz section on `0..=T`.
pub fn finite_section_norm(g: &StateSpace, horizon: usize) -> f64 {
    let t = g.toeplitz(horizon, sector_core::Weight::UNIT).unwrap();
    t.singular_values().iter().fold(0.0, |a: f64, &v| a.max(v))
}

pub fn small_gain_m(gamma2: f64) -> QuadSpec {
    QuadSpec::phi([[gamma2, 0.0], [0.0, -1.0 / gamma2]]).unwrap()
}

pub fn small_gain_n(gamma1: f64) -> QuadSpec {
    QuadSpec::g([[-1.0 / gamma1, 0.0], [0.0, gamma1]]).unwrap()
}

/// Either a small-gain `M` or an interval sector `[a, b]`.
pub fn random_sector<R: Rng>(rng: &mut R) -> QuadSpec {
    if rng.random_bool(0.5) {
        small_gain_m(rng.random_range(0.1..1.5))
    } else {
        let a = rng.random_range(-1.0..0.5);
        let b = a + rng.random_range(0.1..1.5);
        sector_core::sector_interval_to_m(a, b).unwrap()
    }
}

pub fn random_signal<R: Rng>(rng: &mut R, horizon: usize) -> Signal {
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let v: Vec<f64> = (0..=horizon).map(|_| scale * normal(rng)).collect();
    Signal::scalar(&v).unwrap()
}

pub fn state(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

/// `max_k |x[k] - y[k]|` over the stacked samples.
pub fn max_abs_diff(x: &Signal, y: &Signal) -> f64 {
    x.stacked().iter().zip(y.stacked()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn max_abs(x: &Signal) -> f64 {
    x.stacked().iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

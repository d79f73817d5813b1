mod common;

use common::*;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sector_core::sim::{empirical_gain_with, LoopOptions};
use sector_core::*;

fn random_weight(rng: &mut StdRng) -> Weight {
    Weight::new(rng.random_range(0.7..=1.0)).unwrap()
}

#[test]
fn certificate_tracks_finite_section_norm() {
    let mut rng = StdRng::seed_from_u64(11);
    let t = 24;
    let (mut certified, mut refuted) = (0, 0);
    for _ in 0..60 {
        let order = rng.random_range(1..=3);
        let g = random_schur_siso(&mut rng, order, 0.7);
        let norm = finite_section_norm(&g, t);
        let gamma2 = rng.random_range(0.2..2.0) / norm;
        let m = small_gain_m(gamma2);
        let out = certify(&g, &m, t, Weight::UNIT).unwrap();
        if norm * gamma2 < 0.9 {
            let c = out.certificate().expect("small loop gain must certify");
            let cfg = SipConfig::unweighted(t);
            let phi = Nonlinearity::gain(gamma2);
            let u1 = random_signal(&mut rng, t);
            let u2 = random_signal(&mut rng, t);
            let run = interconnect(&g, &phi, &u1, &u2, t).unwrap();
            let ny = pair_seminorm(&run.y1, &run.y2, &cfg).unwrap();
            let nu = pair_seminorm(&run.u1, &run.u2, &cfg).unwrap();
            assert!(ny <= c.gamma * nu * (1.0 + 1e-9));
            certified += 1;
        } else if norm * gamma2 > 1.1 {
            assert!(out.certificate().is_none(), "loop gain {} certified", norm * gamma2);
            for gamma in [2.0, 50.0] {
                let w = find_violation(&g, &m, gamma, t, Weight::UNIT).unwrap().expect("witness");
                assert!(w.ratio > gamma && w.sigma1 >= -1e-9);
            }
            refuted += 1;
        }
    }
    assert!(certified > 5 && refuted > 5, "{certified} certified, {refuted} refuted");
}

#[test]
fn frequency_screen_brackets_hard_condition() {
    let mut rng = StdRng::seed_from_u64(12);
    for _ in 0..40 {
        let order = rng.random_range(1..=4);
        let g = random_schur_siso(&mut rng, order, 0.8);
        let w = random_weight(&mut rng);
        let gs = g.rho_scale(w);
        if !gs.is_schur().unwrap() {
            continue;
        }
        let peak = peak_gain(&gs, 4096);
        let above = small_gain_n(peak * 1.05);
        let below = small_gain_n(peak * 0.95);
        assert!(check_frequency_condition(&g, &above, 1024, w).unwrap().pass);
        assert!(!check_frequency_condition(&g, &below, 1024, w).unwrap().pass);
        assert!(check_hard_condition(&g, &above, 48, w).unwrap().passed());
        if finite_section_norm(&gs, 200) > peak * 0.96 {
            assert!(!check_hard_condition(&g, &below, 200, w).unwrap().passed());
        }
    }
}

#[test]
fn hard_failure_witness_replays() {
    let mut rng = StdRng::seed_from_u64(13);
    let mut seen = 0;
    for _ in 0..40 {
        let order = rng.random_range(1..=3);
        let g = random_schur_siso(&mut rng, order, 0.9);
        let w = random_weight(&mut rng);
        let n = small_gain_n(0.5 * peak_gain(&g.rho_scale(w), 512).max(1e-3));
        if let HardCheck::Fail(f) = check_hard_condition(&g, &n, 32, w).unwrap() {
            let cfg = SipConfig::new(f.horizon, w);
            let y = g.respond(&f.xi).unwrap();
            let v = quad_form(&y, &f.xi, n.matrix(), &cfg).unwrap();
            assert!(v < 0.0 && (v - f.value).abs() <= 1e-9 * (1.0 + v.abs()));
            seen += 1;
        }
    }
    assert!(seen > 10);
}

#[test]
fn violation_witness_replays_through_the_loop() {
    let mut rng = StdRng::seed_from_u64(14);
    let mut seen = 0;
    for _ in 0..30 {
        let order = rng.random_range(1..=3);
        let g = random_schur_siso(&mut rng, order, 0.8);
        let t = rng.random_range(0..=8);
        let gamma2 = 1.5 / finite_section_norm(&g, t).max(1e-6);
        let m = small_gain_m(gamma2);
        let Some(w) = find_violation(&g, &m, 5.0, t, Weight::UNIT).unwrap() else {
            continue;
        };
        seen += 1;
        let replay = Nonlinearity::PairRelation {
            e2: w.e.1.clone(),
            y2: w.y.1.clone(),
        };
        let run = simulate_loop(&g, &replay, &w.u.0, &w.u.1, t, &LoopOptions::default()).unwrap();
        let scale = 1.0 + max_abs(&w.y.0) + max_abs(&w.y.1);
        assert!(max_abs_diff(&run.y1, &w.y.0) <= 1e-8 * scale);
        assert!(max_abs_diff(&run.e1, &w.e.0) <= 1e-8 * scale);
        if let Some(gains) = &w.gains {
            let phi = Nonlinearity::TimeVaryingGain {
                gains: gains.iter().map(|c| StepGain::Diagonal(c.clone())).collect(),
            };
            let run = simulate_loop(&g, &phi, &w.u.0, &w.u.1, t, &LoopOptions::default()).unwrap();
            assert!(max_abs_diff(&run.y2, &w.y.1) <= 1e-6 * scale);
        }
    }
    assert!(seen > 10);
}

#[test]
fn negative_feedback_certificate_bounds_simulation() {
    let mut rng = StdRng::seed_from_u64(15);
    let mut seen = 0;
    for _ in 0..40 {
        let order = rng.random_range(1..=2);
        let g = random_schur_siso(&mut rng, order, 0.7);
        let m = sector_interval_to_m(0.0, rng.random_range(0.2..3.0))
            .unwrap()
            .with_feedback(Feedback::Negative);
        let Some(c) = certify(&g, &m, 32, Weight::UNIT).unwrap().certificate().cloned() else {
            continue;
        };
        seen += 1;
        let phi = random_sector_nonlinearity(&m, 1, 32, Weight::UNIT, &mut rng).unwrap();
        let inputs: Vec<_> = (0..4).map(|_| (random_signal(&mut rng, 32), random_signal(&mut rng, 32))).collect();
        let gain = empirical_gain_with(&g, &phi, &inputs, 32, Weight::UNIT, Feedback::Negative).unwrap();
        assert!(gain <= c.gamma * (1.0 + 1e-9), "{gain} > {}", c.gamma);
    }
    assert!(seen > 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recursion_agrees_with_dense_gram(seed in any::<u64>(), t_max in 0usize..12) {
        let mut rng = StdRng::seed_from_u64(seed);
        let order = rng.random_range(1..=3);
        let g = random_schur_siso(&mut rng, order, 1.1);
        let w = random_weight(&mut rng);
        let (a, b, c) = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
        let n = QuadSpec::g([[a, b], [b, c]]).unwrap();
        let fast = check_hard_condition(&g, &n, t_max, w).unwrap();
        let dense = check_hard_condition_dense(&g, &n, t_max, w).unwrap();
        match (&fast, &dense) {
            (HardCheck::Pass, HardCheck::Pass) => {}
            (HardCheck::Fail(x), HardCheck::Fail(y)) => {
                prop_assert_eq!(x.horizon, y.horizon);
                prop_assert!(x.value < 0.0);
            }
            _ => {
                // only allowed when the dense spectrum sits at the tolerance
                let eig = match (&fast, &dense) {
                    (HardCheck::Fail(f), _) | (_, HardCheck::Fail(f)) => f.eigenvalue,
                    _ => unreachable!(),
                };
                prop_assert!(eig.abs() < 1e-6, "verdicts differ with eigenvalue {}", eig);
            }
        }
    }

    #[test]
    fn pointwise_sector_implies_cumulative(seed in any::<u64>(), rho in 0.5f64..=1.0) {
        let mut rng = StdRng::seed_from_u64(seed);
        let m = random_sector(&mut rng);
        let w = Weight::new(rho).unwrap();
        let t = 20;
        let phi = random_sector_nonlinearity(&m, 1, t, w, &mut rng).unwrap();
        let e2 = random_signal(&mut rng, t);
        let g = StateSpace::static_gain(nalgebra::DMatrix::zeros(1, 1)).unwrap();
        let run = simulate_loop(&g, &phi, &Signal::zeros(1, t), &e2, t, &LoopOptions::default()).unwrap();
        let cfg = SipConfig::new(t, w);
        for k in 0..=t {
            let c = SipConfig::new(k, w);
            let v = quad_form(&truncate(&run.e2, k), &truncate(&run.y2, k), m.matrix(), &c).unwrap();
            let scale = seminorm(&run.e2, &cfg).unwrap().powi(2) + seminorm(&run.y2, &cfg).unwrap().powi(2);
            prop_assert!(v >= -1e-9 * (1.0 + scale));
        }
    }
}

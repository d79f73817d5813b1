//! The 2×2 quadratic constraints `M` (on `[ξ; Φξ]`) and `N` (on `[Gξ; ξ]`).
//!
//! Presets follow the classical sector conditions in the positive-feedback
//! convention of the interconnection `e1 = u1 + y2, e2 = u2 + y1`. For negative
//! feedback the `N` matrix is replaced by its sign-flipped form `Ñ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add2, is_symmetric2, sub2, sym2_eigenvalues, Mat2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Constraint on the linear system, `⟨[Gξ; ξ], N[Gξ; ξ]⟩ ≥ 0`.
    #[serde(rename = "g")]
    G,
    /// Constraint on the nonlinearity, `⟨[ξ; Φξ], M[ξ; Φξ]⟩ ≥ 0`.
    #[serde(rename = "phi")]
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    #[default]
    Positive,
    Negative,
}

impl Feedback {
    pub fn toggled(self) -> Self {
        match self {
            Feedback::Positive => Feedback::Negative,
            Feedback::Negative => Feedback::Positive,
        }
    }
}

/// Symmetric 2×2 constraint matrix tagged with the side it constrains and the
/// feedback convention it was written for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadSpec {
    #[serde(rename = "K")]
    k: Mat2,
    side: Side,
    feedback: Feedback,
}

impl QuadSpec {
    pub fn new(k: Mat2, side: Side, feedback: Feedback) -> Result<Self> {
        if k.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Matrix("constraint matrix has non-finite entries".into()));
        }
        if !is_symmetric2(&k) {
            return Err(Error::Matrix(format!(
                "constraint matrix is not symmetric: entry (1,2) = {} but (2,1) = {}",
                k[0][1], k[1][0]
            )));
        }
        Ok(Self { k, side, feedback })
    }

    pub fn phi(k: Mat2) -> Result<Self> {
        Self::new(k, Side::Phi, Feedback::Positive)
    }

    pub fn g(k: Mat2) -> Result<Self> {
        Self::new(k, Side::G, Feedback::Positive)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.k
    }
    pub fn side(&self) -> Side {
        self.side
    }
    pub fn feedback(&self) -> Feedback {
        self.feedback
    }

    pub fn with_feedback(mut self, feedback: Feedback) -> Self {
        self.feedback = feedback;
        self
    }

    /// `(λmin, λmax)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        sym2_eigenvalues(&self.k)
    }

    /// Scalar gains `c` with `K11 + 2 K12 c + K22 c² ≥ 0`, when that set is a bounded
    /// interval. For a Phi-side `M` these are the linear maps `φ(ξ) = cξ` inside the sector.
    pub fn gain_interval(&self) -> Option<(f64, f64)> {
        let [[k11, k12], [_, k22]] = self.k;
        if k22 >= 0.0 {
            return None;
        }
        let disc = k12 * k12 - k11 * k22;
        if disc < 0.0 {
            return None;
        }
        let r = disc.sqrt();
        let (c1, c2) = ((-k12 + r) / k22, (-k12 - r) / k22);
        Some((c1.min(c2), c1.max(c2)))
    }
}

/// Replace `K` by `[[K11, -K12], [-K21, K22]]` and toggle the feedback tag.
pub fn flip_sign(k: &QuadSpec) -> QuadSpec {
    let m = k.k;
    QuadSpec {
        k: [[m[0][0], -m[0][1]], [-m[1][0], m[1][1]]],
        side: k.side,
        feedback: k.feedback.toggled(),
    }
}

/// Phi-side `M` for the interval sector `(φ(ξ) - aξ)·(bξ - φ(ξ)) ≥ 0`, unnormalized.
pub fn sector_interval_to_m(a: f64, b: f64) -> Result<QuadSpec> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Parameter(format!("sector interval needs a < b, got a = {a}, b = {b}")));
    }
    let c = 0.5 * (a + b);
    QuadSpec::phi([[-a * b, c], [c, -1.0]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Compatibility {
    pub ok: bool,
    /// `-λmax(M + N)`; positive exactly when `ok`.
    pub eta: f64,
}

/// `M + N ≺ 0`, with `η = -λmax(M + N)`.
pub fn compatibility(m: &QuadSpec, n: &QuadSpec) -> Result<Compatibility> {
    if m.side != Side::Phi || n.side != Side::G {
        return Err(Error::Convention(format!(
            "compatibility expects (Phi-side M, G-side N), got ({:?}, {:?})",
            m.side, n.side
        )));
    }
    if m.feedback != n.feedback {
        return Err(Error::Convention(format!(
            "M is tagged {:?} feedback but N is tagged {:?}",
            m.feedback, n.feedback
        )));
    }
    let eta = -sym2_eigenvalues(&add2(&m.k, &positive_form(n))).1;
    Ok(Compatibility { ok: eta > 0.0, eta })
}

/// The G-side matrix in the positive-feedback convention: `N` itself, or `N` recovered
/// from `Ñ` for a negative-feedback tag. The coupling condition `M + N ≺ 0` is stated on this form.
pub fn positive_form(n: &QuadSpec) -> Mat2 {
    match n.feedback {
        Feedback::Positive => n.k,
        Feedback::Negative => *flip_sign(n).matrix(),
    }
}

/// `M ⋠ 0`, i.e. `λmax(M) > 0`.
pub fn indefinite(m: &QuadSpec) -> bool {
    m.eigenvalues().1 > 0.0
}

/// `K1 ⪯ K2`.
pub fn nested(k1: &QuadSpec, k2: &QuadSpec) -> Result<bool> {
    if k1.side != k2.side || k1.feedback != k2.feedback {
        return Err(Error::Convention("nested() needs matching side and feedback tags".into()));
    }
    let scale = 1.0 + k1.k.iter().flatten().chain(k2.k.iter().flatten()).fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(sym2_eigenvalues(&sub2(&k1.k, &k2.k)).1 <= 1e-12 * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Conic,
    ExtendedConic,
    Passivity,
    SmallGain,
}

/// Parameters of a preset. Conic rows use `delta` (δ) and `big_delta` (Δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", content = "params", rename_all = "snake_case")]
pub enum Preset {
    Conic {
        a: f64,
        b: f64,
        #[serde(default)]
        delta: f64,
        #[serde(default, alias = "Delta")]
        big_delta: f64,
    },
    ExtendedConic {
        a: f64,
        b: f64,
        #[serde(default)]
        delta: f64,
        #[serde(default, alias = "Delta")]
        big_delta: f64,
    },
    Passivity {
        eps1: f64,
        delta1: f64,
        eps2: f64,
        delta2: f64,
    },
    SmallGain {
        gamma1: f64,
        gamma2: f64,
    },
}

impl Preset {
    pub fn name(&self) -> PresetName {
        match self {
            Preset::Conic { .. } => PresetName::Conic,
            Preset::ExtendedConic { .. } => PresetName::ExtendedConic,
            Preset::Passivity { .. } => PresetName::Passivity,
            Preset::SmallGain { .. } => PresetName::SmallGain,
        }
    }

    fn params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            Preset::Conic { a, b, delta, big_delta } | Preset::ExtendedConic { a, b, delta, big_delta } => {
                vec![("a", a), ("b", b), ("delta", delta), ("big_delta", big_delta)]
            }
            Preset::Passivity { eps1, delta1, eps2, delta2 } => {
                vec![("eps1", eps1), ("delta1", delta1), ("eps2", eps2), ("delta2", delta2)]
            }
            Preset::SmallGain { gamma1, gamma2 } => vec![("gamma1", gamma1), ("gamma2", gamma2)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// `M` and `N` of one row of the classical-theorem table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorPair {
    pub name: PresetName,
    #[serde(rename = "M")]
    pub m: QuadSpec,
    #[serde(rename = "N")]
    pub n: QuadSpec,
    pub params: BTreeMap<String, f64>,
    /// The parameter condition together with the standing assumptions of the row
    /// (positive normalizing denominators, nondegenerate sector ends).
    pub valid: bool,
    /// The row's parameter condition alone, as printed in the table.
    pub table_condition: bool,
}

fn nonzero(name: &str, v: f64) -> Result<f64> {
    if v == 0.0 || !v.is_finite() {
        Err(Error::Parameter(format!("denominator {name} vanishes")))
    } else {
        Ok(v)
    }
}

fn conic_branch_check(a: f64, b: f64, delta: f64, big_delta: f64) -> Result<()> {
    if !(a < b) {
        return Err(Error::Parameter(format!("conic presets need a < b, got a = {a}, b = {b}")));
    }
    if delta < 0.0 || big_delta < 0.0 {
        return Err(Error::Parameter("delta and Delta must be nonnegative".into()));
    }
    if delta > 0.0 && big_delta > 0.0 {
        return Err(Error::Parameter(
            "conic presets take either delta = 0, Delta > 0 or delta > 0, Delta = 0".into(),
        ));
    }
    Ok(())
}

fn sym(k11: f64, k12: f64, k22: f64) -> Mat2 {
    [[k11, k12], [k12, k22]]
}

/// Build `M`, `N` for a preset in the positive-feedback convention; with
/// `Feedback::Negative`, `N` is returned as `Ñ`.
pub fn preset(p: Preset, feedback: Feedback) -> Result<SectorPair> {
    let (m, n, table_condition, valid) = match p {
        Preset::Conic { a, b, delta, big_delta } => {
            conic_branch_check(a, b, delta, big_delta)?;
            let s = nonzero("b - a - 2Δ", b - a - 2.0 * big_delta)?;
            let t = nonzero("b - a + 2abδ", b - a + 2.0 * a * b * delta)?;
            let m = sym(
                -(a + big_delta) * (b - big_delta) / s,
                (-a - b) / (2.0 * s),
                -1.0 / s,
            );
            let n = sym(
                a * b / t,
                (a + b) / (2.0 * t),
                (1.0 + a * delta) * (1.0 - b * delta) / t,
            );
            let table = (delta == 0.0 && big_delta > 0.0) || (delta > 0.0 && big_delta == 0.0);
            let standing = if big_delta > 0.0 { s > 0.0 } else { a * b != 0.0 && t > 0.0 };
            (m, n, table, table && standing)
        }
        Preset::ExtendedConic { a, b, delta, big_delta } => {
            conic_branch_check(a, b, delta, big_delta)?;
            let s = nonzero("b - a + 2Δ", b - a + 2.0 * big_delta)?;
            let t = nonzero("b - a - 2abδ", b - a - 2.0 * a * b * delta)?;
            let m = sym(
                (a - big_delta) * (b + big_delta) / s,
                (a + b) / (2.0 * s),
                1.0 / s,
            );
            let n = sym(
                -a * b / t,
                (-a - b) / (2.0 * t),
                -(1.0 - a * delta) * (1.0 + b * delta) / t,
            );
            let table = (delta == 0.0 && big_delta > 0.0) || (delta > 0.0 && big_delta == 0.0);
            let standing = if big_delta > 0.0 { s > 0.0 } else { a * b != 0.0 && t > 0.0 };
            (m, n, table, table && standing)
        }
        Preset::Passivity { eps1, delta1, eps2, delta2 } => {
            let m = sym(-eps2, 0.5, -delta2);
            let n = sym(-delta1, -0.5, -eps1);
            let table = delta1 + eps2 > 0.0 && delta2 + eps1 > 0.0;
            (m, n, table, table)
        }
        Preset::SmallGain { gamma1, gamma2 } => {
            if !(gamma1 > 0.0 && gamma2 > 0.0) {
                return Err(Error::Parameter(format!(
                    "small-gain bounds must be positive, got gamma1 = {gamma1}, gamma2 = {gamma2}"
                )));
            }
            let m = sym(gamma2, 0.0, -1.0 / gamma2);
            let n = sym(-1.0 / gamma1, 0.0, gamma1);
            let table = gamma1 * gamma2 < 1.0;
            (m, n, table, table)
        }
    };
    let m = QuadSpec::new(m, Side::Phi, Feedback::Positive)?;
    let n = QuadSpec::new(n, Side::G, Feedback::Positive)?;
    let (m, n) = match feedback {
        Feedback::Positive => (m, n),
        Feedback::Negative => (m.with_feedback(Feedback::Negative), flip_sign(&n)),
    };
    Ok(SectorPair {
        name: p.name(),
        m,
        n,
        params: p.params(),
        valid,
        table_condition,
    })
}

/// Catalog entry for listing the presets.
#[derive(Debug, Clone, Serialize)]
pub struct PresetInfo {
    pub name: PresetName,
    pub title: &'static str,
    pub params: &'static [&'static str],
    pub condition: &'static str,
}

pub fn catalog() -> Vec<PresetInfo> {
    vec![
        PresetInfo {
            name: PresetName::Conic,
            title: "Conic sector theorem",
            params: &["a", "b", "delta", "big_delta"],
            condition: "a < b, and either delta = 0, Delta > 0 or delta > 0, Delta = 0",
        },
        PresetInfo {
            name: PresetName::ExtendedConic,
            title: "Extended conic sector theorem",
            params: &["a", "b", "delta", "big_delta"],
            condition: "a < b, and either delta = 0, Delta > 0 or delta > 0, Delta = 0",
        },
        PresetInfo {
            name: PresetName::Passivity,
            title: "Extended passivity",
            params: &["eps1", "delta1", "eps2", "delta2"],
            condition: "delta1 + eps2 > 0 and delta2 + eps1 > 0",
        },
        PresetInfo {
            name: PresetName::SmallGain,
            title: "Small gain theorem",
            params: &["gamma1", "gamma2"],
            condition: "gamma1 * gamma2 < 1",
        },
    ]
}

/// Sector file contents: a named preset or an explicit `M` (optionally with `N`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SectorSpec {
    Preset {
        #[serde(flatten)]
        preset: Preset,
        #[serde(default)]
        feedback: Feedback,
    },
    Explicit {
        #[serde(rename = "M")]
        m: Mat2,
        #[serde(rename = "N", default)]
        n: Option<Mat2>,
        #[serde(default = "default_side")]
        side: Side,
        #[serde(default)]
        feedback: Feedback,
    },
}

fn default_side() -> Side {
    Side::Phi
}

/// Resolved sector file: the Phi-side `M`, plus `N` when the file supplies one.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub m: QuadSpec,
    pub n: Option<QuadSpec>,
    pub pair: Option<SectorPair>,
}

impl SectorSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn resolve(&self) -> Result<Sector> {
        match self {
            SectorSpec::Preset { preset: p, feedback } => {
                let pair = preset(*p, *feedback)?;
                Ok(Sector {
                    m: pair.m,
                    n: Some(pair.n),
                    pair: Some(pair),
                })
            }
            SectorSpec::Explicit { m, n, side, feedback } => {
                if *side != Side::Phi {
                    return Err(Error::Convention("explicit sector M must be Phi-side".into()));
                }
                let m = QuadSpec::new(*m, Side::Phi, *feedback)?;
                let n = n.map(|n| QuadSpec::new(n, Side::G, *feedback)).transpose()?;
                Ok(Sector { m, n, pair: None })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_gain_preset() {
        let p = preset(Preset::SmallGain { gamma1: 0.5, gamma2: 0.5 }, Feedback::Positive).unwrap();
        assert_eq!(*p.m.matrix(), [[0.5, 0.0], [0.0, -2.0]]);
        assert_eq!(*p.n.matrix(), [[-2.0, 0.0], [0.0, 0.5]]);
        assert!(p.valid);
        let bad = preset(Preset::SmallGain { gamma1: 1.0, gamma2: 2.0 }, Feedback::Positive).unwrap();
        assert!(!bad.valid);
        let edge = preset(Preset::SmallGain { gamma1: 1.0, gamma2: 1.0 }, Feedback::Positive).unwrap();
        assert!(!edge.valid);
    }

    #[test]
    fn passivity_preset_and_flip() {
        let p = preset(
            Preset::Passivity { eps1: 0.0, delta1: 0.0, eps2: 0.25, delta2: 0.25 },
            Feedback::Positive,
        )
        .unwrap();
        assert_eq!(*p.m.matrix(), [[-0.25, 0.5], [0.5, -0.25]]);
        assert_eq!(*p.n.matrix(), [[0.0, -0.5], [-0.5, 0.0]]);
        assert!(p.valid);
        let c = compatibility(&p.m, &p.n).unwrap();
        assert!(c.ok);
        assert!((c.eta - 0.25).abs() < 1e-15);

        let d1 = 0.3;
        let e1 = 0.7;
        let n = QuadSpec::g(sym(-d1, -0.5, -e1)).unwrap();
        let nt = flip_sign(&n);
        assert_eq!(*nt.matrix(), sym(-d1, 0.5, -e1));
        assert_eq!(nt.feedback(), Feedback::Negative);
        assert_eq!(flip_sign(&nt), n);
        let diag = QuadSpec::g(sym(1.0, 0.0, -2.0)).unwrap();
        assert_eq!(flip_sign(&diag).matrix(), diag.matrix());
    }

    #[test]
    fn division_by_zero_rejected() {
        let r = preset(Preset::Conic { a: 0.0, b: 1.0, delta: 0.0, big_delta: 0.5 }, Feedback::Positive);
        assert!(matches!(r, Err(Error::Parameter(_))));
        let r = preset(Preset::Conic { a: 0.0, b: 1.0, delta: 0.1, big_delta: 0.1 }, Feedback::Positive);
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn interval_sectors() {
        assert_eq!(*sector_interval_to_m(1.0, 10.0).unwrap().matrix(), [[-10.0, 5.5], [5.5, -1.0]]);
        assert_eq!(*sector_interval_to_m(-1.0, 1.0).unwrap().matrix(), [[1.0, 0.0], [0.0, -1.0]]);
        let m = sector_interval_to_m(0.0, 1.0).unwrap();
        assert_eq!(m.matrix()[0][0], 0.0);
        assert_eq!(m.matrix()[0][1], 0.5);
        assert!(sector_interval_to_m(2.0, 2.0).is_err());
        let (lo, hi) = sector_interval_to_m(1.0, 10.0).unwrap().gain_interval().unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 10.0).abs() < 1e-12);
    }

    #[test]
    fn compatibility_examples() {
        let p = preset(Preset::SmallGain { gamma1: 0.5, gamma2: 0.5 }, Feedback::Positive).unwrap();
        let c = compatibility(&p.m, &p.n).unwrap();
        assert!(c.ok && (c.eta - 1.5).abs() < 1e-15);
        let m = QuadSpec::phi(sym(1.0, 0.3, -2.0)).unwrap();
        let n = QuadSpec::g(sym(-1.0, -0.3, 2.0)).unwrap();
        assert!(!compatibility(&m, &n).unwrap().ok);
        let neg = n.with_feedback(Feedback::Negative);
        assert!(matches!(compatibility(&m, &neg), Err(Error::Convention(_))));
    }

    #[test]
    fn indefinite_and_nested() {
        assert!(indefinite(&QuadSpec::phi(sym(-10.0, 5.5, -1.0)).unwrap()));
        assert!(!indefinite(&QuadSpec::phi(sym(-1.0, 0.0, -1.0)).unwrap()));
        assert!(indefinite(&QuadSpec::phi(sym(1.0, 0.0, -1.0)).unwrap()));
        let m = QuadSpec::phi(sym(-10.0, 5.5, -1.0)).unwrap();
        let inner = QuadSpec::phi(sym(-11.0, 5.5, -2.0)).unwrap();
        assert!(nested(&m, &m).unwrap());
        assert!(nested(&inner, &m).unwrap());
        assert!(!nested(&m, &inner).unwrap());
    }

    #[test]
    fn nested_sectors_contain_gains() {
        let outer = sector_interval_to_m(1.0, 10.0).unwrap();
        let inner = QuadSpec::phi(sym(-11.0, 5.5, -2.0)).unwrap();
        assert!(nested(&inner, &outer).unwrap());
        let (lo, hi) = inner.gain_interval().unwrap();
        assert!(lo > 1.0 && hi < 10.0);
        for i in 0..=200 {
            let c = lo + (hi - lo) * i as f64 / 200.0;
            for xi in [-3.0, -0.5, 0.1, 2.0] {
                let phi = c * xi;
                let f = |k: &Mat2| k[0][0] * xi * xi + 2.0 * k[0][1] * xi * phi + k[1][1] * phi * phi;
                assert!(f(inner.matrix()) >= -1e-12);
                assert!(f(outer.matrix()) >= f(inner.matrix()) - 1e-12);
            }
        }
    }

    #[test]
    fn sector_json_forms() {
        let s = SectorSpec::from_json_str(
            r#"{"preset": "small_gain", "params": {"gamma1": 0.5, "gamma2": 2.0}, "feedback": "positive"}"#,
        )
        .unwrap();
        let r = s.resolve().unwrap();
        assert_eq!(*r.m.matrix(), [[2.0, 0.0], [0.0, -0.5]]);
        assert!(r.n.is_some());
        let e = SectorSpec::from_json_str(r#"{"M": [[-10, 5.5], [5.5, -1]], "side": "phi", "feedback": "positive"}"#)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(*e.m.matrix(), [[-10.0, 5.5], [5.5, -1.0]]);
        let c = SectorSpec::from_json_str(r#"{"preset": "conic", "params": {"a": 1, "b": 3, "Delta": 0.5}}"#)
            .unwrap()
            .resolve()
            .unwrap();
        assert!(c.pair.unwrap().valid);
        let asym = SectorSpec::from_json_str(r#"{"M": [[1, 2], [3, 1]]}"#).unwrap();
        assert!(matches!(asym.resolve(), Err(Error::Matrix(_))));
    }

    proptest! {
        #[test]
        fn flip_preserves_spectrum_and_negative_tag_keeps_compatibility(m11 in -5.0..5.0f64, m12 in -5.0..5.0f64, m22 in -5.0..5.0f64,
                                                     n11 in -5.0..5.0f64, n12 in -5.0..5.0f64, n22 in -5.0..5.0f64) {
            let m = QuadSpec::phi(sym(m11, m12, m22)).unwrap();
            let n = QuadSpec::g(sym(n11, n12, n22)).unwrap();
            let (a, b) = m.eigenvalues();
            let (c, d) = flip_sign(&m).eigenvalues();
            prop_assert!((a - c).abs() < 1e-12 && (b - d).abs() < 1e-12);
            let before = compatibility(&m, &n).unwrap();
            let after = compatibility(&m.with_feedback(Feedback::Negative), &flip_sign(&n)).unwrap();
            prop_assert!((before.eta - after.eta).abs() < 1e-12);
        }

        #[test]
        fn nested_is_a_partial_order(a in prop::array::uniform3(-3.0..3.0f64), b in prop::array::uniform3(-3.0..3.0f64), c in prop::array::uniform3(-3.0..3.0f64)) {
            let q = |v: [f64; 3]| QuadSpec::phi(sym(v[0], v[1], v[2])).unwrap();
            let (x, y, z) = (q(a), q(b), q(c));
            prop_assert!(nested(&x, &x).unwrap());
            if nested(&x, &y).unwrap() && nested(&y, &x).unwrap() {
                for (p, r) in x.matrix().iter().flatten().zip(y.matrix().iter().flatten()) {
                    prop_assert!((p - r).abs() < 1e-10);
                }
            }
            if nested(&x, &y).unwrap() && nested(&y, &z).unwrap() {
                prop_assert!(nested(&x, &z).unwrap());
            }
        }
    }
}

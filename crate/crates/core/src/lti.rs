//! Discrete-time causal linear operators as state-space realizations.
//!
//! `x[k+1] = A x[k] + B u[k]`, `y[k] = C x[k] + D u[k]`. A static gain is the
//! `n = 0` case with empty `A`, `B`, `C`. Certification always runs from zero
//! initial state; nonzero `x0` only enters decay experiments.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::signal::{Signal, Weight};

pub type Complex64 = Complex<f64>;

const SCHUR_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}, must be square", n, a.ncols())));
        }
        let (p, m) = d.shape();
        if p == 0 || m == 0 {
            return Err(Error::Dimension("D must have at least one row and column".into()));
        }
        if b.shape() != (n, m) {
            return Err(Error::Dimension(format!(
                "B is {}x{}, expected {n}x{m}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.shape() != (p, n) {
            return Err(Error::Dimension(format!(
                "C is {}x{}, expected {p}x{n}",
                c.nrows(),
                c.ncols()
            )));
        }
        for (name, mat) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self { a, b, c, d })
    }

    /// Static gain `y = D u` (`n = 0`).
    pub fn static_gain(d: DMatrix<f64>) -> Result<Self> {
        let (p, m) = d.shape();
        Self::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, m), DMatrix::zeros(p, 0), d)
    }

    /// Single-input single-output system from scalar-sized row-major slices.
    pub fn siso(a: &[f64], b: &[f64], c: &[f64], d: f64) -> Result<Self> {
        let n = b.len();
        if a.len() != n * n || c.len() != n {
            return Err(Error::Dimension("siso: inconsistent A/B/C lengths".into()));
        }
        Self::new(
            DMatrix::from_row_slice(n, n, a),
            DMatrix::from_row_slice(n, 1, b),
            DMatrix::from_row_slice(1, n, c),
            DMatrix::from_element(1, 1, d),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.d.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.d.nrows()
    }

    pub fn has_feedthrough(&self) -> bool {
        self.d.iter().any(|&v| v != 0.0)
    }

    /// Run the recursion from `x0` over the horizon of `u`. Returns the output and the
    /// state trajectory `x[0..=T+1]`.
    pub fn simulate(&self, u: &Signal, x0: &DVector<f64>) -> Result<(Signal, Vec<DVector<f64>>)> {
        if u.dim() != self.inputs() {
            return Err(Error::Dimension(format!(
                "input has dimension {}, system expects {}",
                u.dim(),
                self.inputs()
            )));
        }
        if x0.len() != self.states() {
            return Err(Error::Dimension(format!(
                "initial state has dimension {}, system has {} states",
                x0.len(),
                self.states()
            )));
        }
        let mut x = x0.clone();
        let mut states = Vec::with_capacity(u.len() + 1);
        let mut y = Signal::zeros(self.outputs(), u.horizon());
        for k in 0..u.len() {
            let uk = DVector::from_column_slice(u.at(k));
            let yk = &self.c * &x + &self.d * &uk;
            y.at_mut(k).copy_from_slice(yk.as_slice());
            let next = &self.a * &x + &self.b * &uk;
            states.push(std::mem::replace(&mut x, next));
        }
        states.push(x);
        Ok((y, states))
    }

    /// Zero-initial-state response.
    pub fn respond(&self, u: &Signal) -> Result<Signal> {
        Ok(self.simulate(u, &DVector::zeros(self.states()))?.0)
    }

    /// Markov parameters `h[0] = D`, `h[k] = C A^{k-1} B`, for `k = 0..=T`.
    pub fn impulse_response(&self, horizon: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(self.d.clone());
        let mut ak_b = self.b.clone();
        for _ in 0..horizon {
            out.push(&self.c * &ak_b);
            ak_b = &self.a * &ak_b;
        }
        out
    }

    /// Block lower-triangular lift of the (ρ-scaled) system on `T + 1` samples:
    /// block `(i, j)` is `ρ^{-(i-j)} h[i-j]` for `i ≥ j`.
    pub fn toeplitz(&self, horizon: usize, weight: Weight) -> Result<DMatrix<f64>> {
        let (p, m) = (self.outputs(), self.inputs());
        let h = self.impulse_response(horizon);
        let lift = weight.lift_factors(horizon)?;
        let mut out = DMatrix::zeros(p * (horizon + 1), m * (horizon + 1));
        for i in 0..=horizon {
            for j in 0..=i {
                let block = &h[i - j] * lift[i - j];
                out.view_mut((i * p, j * m), (p, m)).copy_from(&block);
            }
        }
        Ok(out)
    }

    /// Frequency response `C (zI - A)^{-1} B + D`.
    pub fn transfer_eval(&self, z: Complex64) -> Result<DMatrix<Complex64>> {
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        let n = self.states();
        if n == 0 {
            return Ok(d);
        }
        let resolvent = DMatrix::<Complex64>::identity(n, n) * z - self.a.map(|v| Complex64::new(v, 0.0));
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let sol = resolvent
            .lu()
            .solve(&b)
            .filter(|s| s.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
            .ok_or_else(|| Error::Singularity(format!("zI - A is singular at z = {z}")))?;
        Ok(self.c.map(|v| Complex64::new(v, 0.0)) * sol + d)
    }

    /// `(A/ρ, B/ρ, C, D)`: conjugation of the system by the `ρ^{-k}` time weighting.
    pub fn rho_scale(&self, weight: Weight) -> StateSpace {
        let s = 1.0 / weight.rho();
        StateSpace {
            a: &self.a * s,
            b: &self.b * s,
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }

    /// `-G`, used to move between feedback sign conventions.
    pub fn negated(&self) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: self.b.clone(),
            c: -&self.c,
            d: -&self.d,
        }
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        if self.states() == 0 {
            return Ok(0.0);
        }
        let schur = Schur::try_new(self.a.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerics("Schur iteration did not converge".into()))?;
        Ok(schur
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, l| acc.max(l.norm())))
    }

    /// Spectral radius of `A` below `1 - 1e-12`.
    pub fn is_schur(&self) -> Result<bool> {
        Ok(self.spectral_radius()? < 1.0 - SCHUR_MARGIN)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct RawStateSpace {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(name: &str, rows: &[Vec<f64>], cols_if_empty: usize) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, cols_if_empty));
    }
    let cols = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Dimension(format!("{name}: row {i} has {} entries, expected {cols}", rows[i].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl TryFrom<RawStateSpace> for StateSpace {
    type Error = Error;

    fn try_from(raw: RawStateSpace) -> Result<Self> {
        let d = from_rows("D", &raw.d, 0)?;
        let n = raw.a.len();
        let a = from_rows("A", &raw.a, 0)?;
        let b = from_rows("B", &raw.b, d.ncols())?;
        let mut c = from_rows("C", &raw.c, n)?;
        if n == 0 && c.nrows() == 0 {
            c = DMatrix::zeros(d.nrows(), 0);
        }
        StateSpace::new(a, b, c, d)
    }
}

impl Serialize for StateSpace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let empty = self.states() == 0;
        let raw = RawStateSpace {
            a: to_rows(&self.a),
            b: if empty { vec![] } else { to_rows(&self.b) },
            c: if empty { vec![] } else { to_rows(&self.c) },
            d: to_rows(&self.d),
        };
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateSpace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawStateSpace::deserialize(d)?;
        StateSpace::try_from(raw).map_err(serde::de::Error::custom)
    }
}

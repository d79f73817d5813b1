//! Finite-horizon signals and the weighted cumulative semi-inner products on them.
//!
//! A [`Signal`] holds the samples `x[0..=T]` of a sequence in ℓ2e; every signal is
//! implicitly zero beyond its horizon. The semi-inner product truncated at `T` with
//! weight `ρ` is
//!
//! ```text
//! ⟨x, y⟩_{ρ,T} = Σ_{k=0}^{T} ρ^{-2k} ⟨x[k], y[k]⟩
//! ```
//!
//! and `ρ = 1` gives the plain cumulative semi-inner product.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric2, Mat2};

/// Vector-valued sequence `x[0], …, x[T]`, stored time-major.
///
/// The flat storage is exactly the stacked vector `[x[0]; x[1]; …; x[T]]` used by the
/// lifted (block-Toeplitz) operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    dim: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Horizon("signal must have at least one sample".into()))?;
        if dim == 0 {
            return Err(Error::Dimension("signal samples must be non-empty".into()));
        }
        if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::Dimension(format!(
                "sample {k} has dimension {}, expected {dim}",
                r.len()
            )));
        }
        Ok(Self {
            dim,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Build from a stacked vector of length `dim * (T + 1)`.
    pub fn from_stacked(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("signal dimension must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::Horizon("signal must have at least one sample".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "stacked length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    /// Scalar signal from its samples.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::from_stacked(1, values.to_vec())
    }

    pub fn zeros(dim: usize, horizon: usize) -> Self {
        assert!(dim > 0, "signal dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim * (horizon + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.data.len() / self.dim - 1
    }

    /// Number of samples, `horizon + 1`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Sample `k`, or zeros past the horizon.
    pub fn get_or_zero(&self, k: usize) -> Vec<f64> {
        if k < self.len() {
            self.at(k).to_vec()
        } else {
            vec![0.0; self.dim]
        }
    }

    pub fn stacked(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Signal {
        Signal {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`, sample by sample; the shorter signal is zero-extended.
    pub fn axpy(&self, s: f64, other: &Signal) -> Result<Signal> {
        check_dims(self, other)?;
        let len = self.len().max(other.len());
        let mut out = Signal::zeros(self.dim, len - 1);
        for k in 0..len {
            let a = self.get_or_zero(k);
            let b = other.get_or_zero(k);
            for (o, (x, y)) in out.at_mut(k).iter_mut().zip(a.iter().zip(&b)) {
                *o = x + s * y;
            }
        }
        Ok(out)
    }

    /// Apply `ρ^{-k}` to sample `k`, the map that turns `⟨·,·⟩_{ρ,T}` into `⟨·,·⟩_{1,T}`.
    pub fn lift(&self, weight: Weight) -> Result<Signal> {
        let w = weight.lift_factors(self.horizon())?;
        Ok(self.scale_by_time(&w))
    }

    /// Inverse of [`Signal::lift`]: multiply sample `k` by `ρ^{k}`.
    pub fn unlift(&self, weight: Weight) -> Signal {
        let rho = weight.rho();
        let mut f = 1.0_f64;
        let mut factors = Vec::with_capacity(self.len());
        for _ in 0..self.len() {
            factors.push(f);
            f *= rho;
        }
        self.scale_by_time(&factors)
    }

    fn scale_by_time(&self, factors: &[f64]) -> Signal {
        let mut out = self.clone();
        for (k, f) in factors.iter().enumerate() {
            out.at_mut(k).iter_mut().for_each(|v| *v *= f);
        }
        out
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Parse CSV: one row per time index. A header row (`k,v0,…`) is optional; when
    /// present the first column holds the index and is dropped.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        let mut has_header = false;
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if line == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                has_header = true;
                continue;
            }
            let skip = usize::from(has_header);
            let row = record
                .iter()
                .skip(skip)
                .enumerate()
                .map(|(col, f)| {
                    f.parse::<f64>().map_err(|_| {
                        Error::Parameter(format!(
                            "csv line {}, column {}: '{f}' is not a number",
                            line + 1,
                            col + skip + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    /// Write CSV with a `k,v0,…,v{m-1}` header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["k".to_string()];
        header.extend((0..self.dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (k, row) in self.rows().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load from a `.csv` or `.json` file, chosen by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            Self::from_csv_reader(std::fs::File::open(path)?)
        } else {
            Self::from_json_str(&std::fs::read_to_string(path)?)
        }
    }
}

impl Serialize for Signal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Signal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Signal::new(rows).map_err(serde::de::Error::custom)
    }
}

/// Exponential weight `ρ ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Weight(f64);

impl Weight {
    pub const UNIT: Weight = Weight(1.0);

    pub fn new(rho: f64) -> Result<Self> {
        if rho > 0.0 && rho <= 1.0 {
            Ok(Weight(rho))
        } else {
            Err(Error::Parameter(format!("weight rho = {rho} must lie in (0, 1]")))
        }
    }

    pub fn rho(self) -> f64 {
        self.0
    }

    pub fn is_unit(self) -> bool {
        self.0 == 1.0
    }

    /// `ρ^{-k}` for `k = 0..=T`, by running product. Errors rather than saturating.
    pub fn lift_factors(self, horizon: usize) -> Result<Vec<f64>> {
        let step = 1.0 / self.0;
        let mut out = Vec::with_capacity(horizon + 1);
        let mut f = 1.0_f64;
        for k in 0..=horizon {
            if !f.is_finite() {
                return Err(Error::WeightOverflow(k));
            }
            out.push(f);
            f *= step;
        }
        Ok(out)
    }

    /// `ρ^{-2k}` for `k = 0..=T`, by running product.
    pub fn sip_factors(self, horizon: usize) -> Result<Vec<f64>> {
        let step = 1.0 / (self.0 * self.0);
        let mut out = Vec::with_capacity(horizon + 1);
        let mut f = 1.0_f64;
        for k in 0..=horizon {
            if !f.is_finite() {
                return Err(Error::WeightOverflow(k));
            }
            out.push(f);
            f *= step;
        }
        Ok(out)
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Weight::new(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Horizon and weight of a truncated semi-inner product `⟨·,·⟩_{ρ,T}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SipConfig {
    pub horizon: usize,
    pub weight: Weight,
}

impl SipConfig {
    pub fn new(horizon: usize, weight: Weight) -> Self {
        Self { horizon, weight }
    }

    pub fn unweighted(horizon: usize) -> Self {
        Self::new(horizon, Weight::UNIT)
    }
}

fn check_dims(x: &Signal, y: &Signal) -> Result<()> {
    if x.dim != y.dim {
        return Err(Error::Dimension(format!(
            "signal dimensions differ: {} vs {}",
            x.dim, y.dim
        )));
    }
    Ok(())
}

fn check_horizon(x: &Signal, cfg: &SipConfig) -> Result<()> {
    if cfg.horizon > x.horizon() {
        return Err(Error::Horizon(format!(
            "horizon {} exceeds signal horizon {}",
            cfg.horizon,
            x.horizon()
        )));
    }
    Ok(())
}

/// `⟨x, y⟩_{ρ,T}`.
pub fn sip(x: &Signal, y: &Signal, cfg: &SipConfig) -> Result<f64> {
    check_dims(x, y)?;
    check_horizon(x, cfg)?;
    check_horizon(y, cfg)?;
    let weights = cfg.weight.sip_factors(cfg.horizon)?;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * dot(x.at(k), y.at(k)))
        .sum())
}

/// `‖x‖_{ρ,T} = sqrt(⟨x, x⟩_{ρ,T})`.
pub fn seminorm(x: &Signal, cfg: &SipConfig) -> Result<f64> {
    Ok(sip(x, x, cfg)?.max(0.0).sqrt())
}

/// Seminorm of a two-channel signal `(x1; x2)` in X², `sqrt(‖x1‖² + ‖x2‖²)`.
pub fn pair_seminorm(x1: &Signal, x2: &Signal, cfg: &SipConfig) -> Result<f64> {
    Ok((sip(x1, x1, cfg)? + sip(x2, x2, cfg)?).max(0.0).sqrt())
}

/// `x_T`: agrees with `x` through index `T`, zero afterwards. Stored at length
/// `max(horizon, T) + 1`.
pub fn truncate(x: &Signal, horizon: usize) -> Signal {
    let len = x.len().max(horizon + 1);
    let mut out = Signal::zeros(x.dim, len - 1);
    let keep = x.len().min(horizon + 1);
    out.data[..keep * x.dim].copy_from_slice(&x.data[..keep * x.dim]);
    out
}

/// `⟨[w; ξ], K [w; ξ]⟩_{ρ,T} = K11⟨w,w⟩ + 2 K12⟨w,ξ⟩ + K22⟨ξ,ξ⟩`.
pub fn quad_form(w: &Signal, xi: &Signal, k: &Mat2, cfg: &SipConfig) -> Result<f64> {
    if !is_symmetric2(k) {
        return Err(Error::Matrix(format!(
            "quadratic-form matrix is not symmetric: K12 = {}, K21 = {}",
            k[0][1], k[1][0]
        )));
    }
    check_dims(w, xi)?;
    check_horizon(w, cfg)?;
    check_horizon(xi, cfg)?;
    let weights = cfg.weight.sip_factors(cfg.horizon)?;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(t, wt)| {
            let (a, b) = (w.at(t), xi.at(t));
            wt * (k[0][0] * dot(a, a) + 2.0 * k[0][1] * dot(a, b) + k[1][1] * dot(b, b))
        })
        .sum())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

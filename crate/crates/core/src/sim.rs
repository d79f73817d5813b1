//! Time-domain simulation of the loop `e1 = u1 + y2`, `y1 = G e1`, `e2 = u2 + y1`,
//! `y2 = Φ e2`, with a library of sector-bounded nonlinearities.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::StateSpace;
use crate::sector::{Feedback, QuadSpec, Side};
use crate::signal::{pair_seminorm, Signal, SipConfig, Weight};

const RESIDUAL_TOL: f64 = 1e-10;
const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_ITERS: usize = 100;
const RELAXATION: f64 = 0.5;

/// Memoryless map applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum StaticMap {
    Zero,
    Gain { gain: f64 },
    /// `clamp(ξ, -level, level)`.
    Saturation { level: f64 },
    /// `ξ - clamp(ξ, -width, width)`.
    DeadZone { width: f64 },
    /// `lower·ξ + (upper - lower)·clamp(ξ, -level, level)`, inside the sector `[lower, upper]`.
    SectorSaturation { lower: f64, upper: f64, level: f64 },
}

impl StaticMap {
    pub fn apply(&self, xi: f64) -> f64 {
        match *self {
            StaticMap::Zero => 0.0,
            StaticMap::Gain { gain } => gain * xi,
            StaticMap::Saturation { level } => xi.clamp(-level, level),
            StaticMap::DeadZone { width } => xi - xi.clamp(-width, width),
            StaticMap::SectorSaturation { lower, upper, level } => lower * xi + (upper - lower) * xi.clamp(-level, level),
        }
    }

    fn linear_gain(&self) -> Option<f64> {
        match *self {
            StaticMap::Zero => Some(0.0),
            StaticMap::Gain { gain } => Some(gain),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StaticMap::Zero => true,
            StaticMap::Gain { gain } => gain.is_finite(),
            StaticMap::Saturation { level } => level.is_finite() && level >= 0.0,
            StaticMap::DeadZone { width } => width.is_finite() && width >= 0.0,
            StaticMap::SectorSaturation { lower, upper, level } => {
                lower.is_finite() && upper.is_finite() && level.is_finite() && level >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid static map parameters: {self:?}")))
        }
    }
}

/// Gain at one time step: the same for every component, or one per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepGain {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

impl StepGain {
    fn component(&self, i: usize) -> f64 {
        match self {
            StepGain::Scalar(c) => *c,
            StepGain::Diagonal(c) => c[i],
        }
    }
}

/// The operator `Φ` in the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    StaticMap {
        #[serde(flatten)]
        map: StaticMap,
    },
    /// `y2[k] = c[k]·e2[k]`; needs a gain for every step of the horizon.
    TimeVaryingGain { gains: Vec<StepGain> },
    /// `y2[k] = gain·e2[k - delay]`, zero for `k < delay`.
    DelayGain { gain: f64, delay: usize },
    /// Replays a recorded pair `(e2, y2)`; any other input is refused.
    PairRelation { e2: Signal, y2: Signal },
}

impl Nonlinearity {
    pub fn static_map(map: StaticMap) -> Self {
        Nonlinearity::StaticMap { map }
    }

    pub fn gain(gain: f64) -> Self {
        Nonlinearity::static_map(StaticMap::Gain { gain })
    }

    pub fn zero() -> Self {
        Nonlinearity::static_map(StaticMap::Zero)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let phi: Nonlinearity = serde_json::from_str(s)?;
        phi.validate()?;
        Ok(phi)
    }

    /// `y2[k]` depends on `e2` only up to `k - 1`.
    pub fn strictly_causal(&self) -> bool {
        match self {
            Nonlinearity::DelayGain { delay, .. } => *delay >= 1,
            Nonlinearity::PairRelation { .. } => true,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Nonlinearity::StaticMap { map } => map.validate(),
            Nonlinearity::TimeVaryingGain { gains } => {
                let mut dim = None;
                for (k, g) in gains.iter().enumerate() {
                    let vals: &[f64] = match g {
                        StepGain::Scalar(c) => std::slice::from_ref(c),
                        StepGain::Diagonal(c) => {
                            if *dim.get_or_insert(c.len()) != c.len() {
                                return Err(Error::Dimension(format!("gain at step {k} has {} components", c.len())));
                            }
                            c
                        }
                    };
                    if vals.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Parameter(format!("gain at step {k} is not finite")));
                    }
                }
                Ok(())
            }
            Nonlinearity::DelayGain { gain, .. } => {
                if gain.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter("delay gain is not finite".into()))
                }
            }
            Nonlinearity::PairRelation { e2, y2 } => {
                if e2.dim() != y2.dim() || e2.horizon() != y2.horizon() {
                    return Err(Error::Dimension("pair_relation signals must share dim and horizon".into()));
                }
                Ok(())
            }
        }
    }

    pub fn check_for(&self, dim: usize, horizon: usize) -> Result<()> {
        self.validate()?;
        match self {
            Nonlinearity::TimeVaryingGain { gains } => {
                if gains.len() < horizon + 1 {
                    return Err(Error::Horizon(format!(
                        "time-varying gain has {} steps, the simulation needs {}",
                        gains.len(),
                        horizon + 1
                    )));
                }
                if let Some(StepGain::Diagonal(c)) = gains.iter().find(|g| matches!(g, StepGain::Diagonal(_))) {
                    if c.len() != dim {
                        return Err(Error::Dimension(format!("gain has {} components, loop has {dim}", c.len())));
                    }
                }
            }
            Nonlinearity::PairRelation { e2, .. } => {
                if e2.dim() != dim {
                    return Err(Error::Dimension(format!("recorded pair has dim {}, loop has {dim}", e2.dim())));
                }
                if e2.horizon() < horizon {
                    return Err(Error::Horizon(format!(
                        "recorded pair covers {} steps, the simulation needs {}",
                        e2.len(),
                        horizon + 1
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Linear gain per component at step `k`, for memoryless linear kinds.
    fn step_gain(&self, k: usize, dim: usize) -> Option<DVector<f64>> {
        match self {
            Nonlinearity::StaticMap { map } => map.linear_gain().map(|c| DVector::from_element(dim, c)),
            Nonlinearity::TimeVaryingGain { gains } => Some(DVector::from_fn(dim, |i, _| gains[k].component(i))),
            Nonlinearity::DelayGain { gain, delay: 0 } => Some(DVector::from_element(dim, *gain)),
            _ => None,
        }
    }

    /// `y2[k]` from `e2[k]` for memoryless kinds (including delay 0).
    fn memoryless(&self, k: usize, e2: &[f64]) -> Vec<f64> {
        match self {
            Nonlinearity::StaticMap { map } => e2.iter().map(|&v| map.apply(v)).collect(),
            _ => {
                let c = self.step_gain(k, e2.len()).expect("memoryless linear kind");
                e2.iter().zip(c.iter()).map(|(e, c)| c * e).collect()
            }
        }
    }
}

/// All loop signals over `0..=T` and the plant state `x[0..=T+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSignals {
    pub u1: Signal,
    pub u2: Signal,
    pub e1: Signal,
    pub e2: Signal,
    pub y1: Signal,
    pub y2: Signal,
    pub states: Vec<DVector<f64>>,
}

impl LoopSignals {
    /// CSV with columns `k, e1, e2, y1, y2, x...` (suffixed by component for vectors).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let names = |base: &str, dim: usize| -> Vec<String> {
            if dim == 1 {
                vec![base.to_string()]
            } else {
                (0..dim).map(|i| format!("{base}_{i}")).collect()
            }
        };
        let n = self.states.first().map_or(0, |x| x.len());
        let mut header = vec!["k".to_string()];
        for (b, s) in [("e1", &self.e1), ("e2", &self.e2), ("y1", &self.y1), ("y2", &self.y2)] {
            header.extend(names(b, s.dim()));
        }
        header.extend((0..n).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for k in 0..self.e1.len() {
            let mut row = vec![k.to_string()];
            for s in [&self.e1, &self.e2, &self.y1, &self.y2] {
                row.extend(s.at(k).iter().map(|v| format!("{v:.16e}")));
            }
            row.extend(self.states[k].iter().map(|v| format!("{v:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopOptions {
    /// Initial plant state; zero when absent.
    pub x0: Option<DVector<f64>>,
    /// Negative feedback uses `e1 = u1 - y2`.
    pub feedback: Feedback,
}

/// Simulates the loop from zero state over `0..=T`. Inputs shorter than the horizon are
/// extended by zeros.
pub fn interconnect(g: &StateSpace, phi: &Nonlinearity, u1: &Signal, u2: &Signal, horizon: usize) -> Result<LoopSignals> {
    simulate_loop(g, phi, u1, u2, horizon, &LoopOptions::default())
}

pub fn simulate_loop(
    g: &StateSpace,
    phi: &Nonlinearity,
    u1: &Signal,
    u2: &Signal,
    horizon: usize,
    opts: &LoopOptions,
) -> Result<LoopSignals> {
    let (p, m, n) = (g.outputs(), g.inputs(), g.states());
    if p != m {
        return Err(Error::Dimension(format!("the loop needs a square G, got {p} outputs and {m} inputs")));
    }
    if u1.dim() != m || u2.dim() != p {
        return Err(Error::Dimension(format!(
            "inputs have dims ({}, {}), G expects ({m}, {p})",
            u1.dim(),
            u2.dim()
        )));
    }
    phi.check_for(p, horizon)?;
    let mut x = match &opts.x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::Dimension(format!("initial state has {} entries, G has {n} states", x0.len())))
        }
        Some(x0) => x0.clone(),
        None => DVector::zeros(n),
    };
    let s = match opts.feedback {
        Feedback::Positive => 1.0,
        Feedback::Negative => -1.0,
    };
    let (a, b, c, d) = (g.a(), g.b(), g.c(), g.d());
    let feedthrough = g.has_feedthrough();
    let mut out = LoopSignals {
        u1: Signal::zeros(m, horizon),
        u2: Signal::zeros(p, horizon),
        e1: Signal::zeros(m, horizon),
        e2: Signal::zeros(p, horizon),
        y1: Signal::zeros(p, horizon),
        y2: Signal::zeros(m, horizon),
        states: Vec::with_capacity(horizon + 2),
    };
    for k in 0..=horizon {
        let u1k = DVector::from_vec(u1.get_or_zero(k));
        let u2k = DVector::from_vec(u2.get_or_zero(k));
        let cx = c * &x;
        let (e1, e2, y1, y2);
        if phi.strictly_causal() {
            y2 = DVector::from_vec(match phi {
                Nonlinearity::DelayGain { gain, delay } => {
                    if k >= *delay {
                        out.e2.at(k - delay).iter().map(|v| gain * v).collect()
                    } else {
                        vec![0.0; m]
                    }
                }
                Nonlinearity::PairRelation { y2, .. } => y2.at(k).to_vec(),
                _ => unreachable!("strictly causal kinds are delays and replays"),
            });
            e1 = &u1k + &y2 * s;
            y1 = &cx + d * &e1;
            e2 = &u2k + &y1;
        } else if !feedthrough {
            y1 = cx.clone();
            e2 = &u2k + &y1;
            y2 = DVector::from_vec(phi.memoryless(k, e2.as_slice()));
            e1 = &u1k + &y2 * s;
        } else if let Some(gain) = phi.step_gain(k, m) {
            // (I - s D K) e2 = u2 + C x + D u1
            let kd = DMatrix::from_diagonal(&gain);
            let lhs = DMatrix::identity(p, p) - d * &kd * s;
            let rhs = &u2k + &cx + d * &u1k;
            let sol = lhs
                .lu()
                .solve(&rhs)
                .filter(|v| v.iter().all(|x| x.is_finite()))
                .ok_or_else(|| Error::WellPosedness(format!("I - D·K is singular at step {k}")))?;
            e2 = sol;
            y2 = kd * &e2;
            e1 = &u1k + &y2 * s;
            y1 = &cx + d * &e1;
        } else {
            let mut z = &u2k + &cx + d * &u1k;
            let mut converged = false;
            for _ in 0..FIXED_POINT_ITERS {
                let phi_z = DVector::from_vec(phi.memoryless(k, z.as_slice()));
                let fz = &u2k + &cx + d * (&u1k + phi_z * s);
                let r = &fz - &z;
                if !r.iter().all(|v| v.is_finite()) {
                    break;
                }
                if r.norm() <= FIXED_POINT_TOL * (1.0 + z.norm()) {
                    converged = true;
                    break;
                }
                z += r * RELAXATION;
            }
            if !converged {
                return Err(Error::WellPosedness(format!(
                    "algebraic loop at step {k} did not converge in {FIXED_POINT_ITERS} iterations"
                )));
            }
            e2 = z;
            y2 = DVector::from_vec(phi.memoryless(k, e2.as_slice()));
            e1 = &u1k + &y2 * s;
            y1 = &cx + d * &e1;
        }
        if let Nonlinearity::PairRelation { e2: rec, .. } = phi {
            let r = DVector::from_column_slice(rec.at(k));
            if (&r - &e2).norm() > 1e-9 * (1.0 + r.norm()) {
                return Err(Error::Input(format!(
                    "pair_relation is only defined on its recorded e2; step {k} leaves it"
                )));
            }
        }
        check_residuals(k, &u1k, &u2k, &e1, &e2, &y1, &y2, &cx, d, s)?;
        out.u1.at_mut(k).copy_from_slice(u1k.as_slice());
        out.u2.at_mut(k).copy_from_slice(u2k.as_slice());
        out.e1.at_mut(k).copy_from_slice(e1.as_slice());
        out.e2.at_mut(k).copy_from_slice(e2.as_slice());
        out.y1.at_mut(k).copy_from_slice(y1.as_slice());
        out.y2.at_mut(k).copy_from_slice(y2.as_slice());
        let next = a * &x + b * &e1;
        out.states.push(std::mem::replace(&mut x, next));
    }
    out.states.push(x);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn check_residuals(
    k: usize,
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    e1: &DVector<f64>,
    e2: &DVector<f64>,
    y1: &DVector<f64>,
    y2: &DVector<f64>,
    cx: &DVector<f64>,
    d: &DMatrix<f64>,
    s: f64,
) -> Result<()> {
    let scale = 1.0 + [u1, u2, e1, e2, y1, y2].iter().map(|v| v.amax()).fold(0.0, f64::max);
    let residuals = [
        (e1 - u1 - y2 * s).amax(),
        (y1 - cx - d * e1).amax(),
        (e2 - u2 - y1).amax(),
    ];
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if !(worst <= RESIDUAL_TOL * scale) {
        return Err(Error::Numerics(format!("loop residual {worst:e} at step {k}")));
    }
    Ok(())
}

fn pointwise_form(m: &QuadSpec, xi: f64, phi: f64) -> (f64, f64) {
    let [[m11, m12], [_, m22]] = *m.matrix();
    let scale = m11.abs().max(m12.abs()).max(m22.abs()) * (xi * xi + phi * phi);
    (m11 * xi * xi + 2.0 * m12 * xi * phi + m22 * phi * phi, scale)
}

/// Checks `⟨[ξ; φ(ξ)], M[ξ; φ(ξ)]⟩ ≥ 0` on `samples` random scalars plus fixed probes.
/// Memoryless maps act componentwise, so the scalar check covers every dimension.
pub fn check_pointwise_sector(phi: &Nonlinearity, m: &QuadSpec, samples: usize, seed: u64) -> Result<bool> {
    if m.side() != Side::Phi {
        return Err(Error::Convention("pointwise sector check takes a Phi-side M".into()));
    }
    phi.validate()?;
    let maps: Vec<Box<dyn Fn(f64) -> f64 + '_>> = match phi {
        Nonlinearity::StaticMap { map } => vec![Box::new(move |x| map.apply(x))],
        Nonlinearity::TimeVaryingGain { gains } => gains
            .iter()
            .flat_map(|g| match g {
                StepGain::Scalar(c) => vec![*c],
                StepGain::Diagonal(c) => c.clone(),
            })
            .map(|c| Box::new(move |x: f64| c * x) as Box<dyn Fn(f64) -> f64>)
            .collect(),
        other => {
            return Err(Error::Kind(format!(
                "pointwise check needs a static map or time-varying gain, got {}",
                kind_name(other)
            )))
        }
    };
    let mut probes = vec![0.0, 1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 10.0, -10.0, 1e3, -1e3];
    if let Nonlinearity::StaticMap { map } = phi {
        for v in match *map {
            StaticMap::Saturation { level } | StaticMap::SectorSaturation { level, .. } => vec![level],
            StaticMap::DeadZone { width } => vec![width],
            _ => vec![],
        } {
            probes.extend([v, -v, 2.0 * v, -2.0 * v]);
        }
    }
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..samples {
        let z: f64 = StandardNormal.sample(&mut rng);
        let mag = 10f64.powf(rng.random_range(-3.0..3.0));
        probes.push(z * mag);
    }
    Ok(maps.iter().all(|f| {
        probes.iter().all(|&xi| {
            let (v, scale) = pointwise_form(m, xi, f(xi));
            v >= -1e-9 * scale.max(1e-300)
        })
    }))
}

fn kind_name(phi: &Nonlinearity) -> &'static str {
    match phi {
        Nonlinearity::StaticMap { .. } => "static_map",
        Nonlinearity::TimeVaryingGain { .. } => "time_varying_gain",
        Nonlinearity::DelayGain { .. } => "delay_gain",
        Nonlinearity::PairRelation { .. } => "pair_relation",
    }
}

/// `max ‖y‖_{ρ,T} / ‖u‖_{ρ,T}` over the input pairs, skipping inputs with `‖u‖ = 0`.
pub fn empirical_gain(
    g: &StateSpace,
    phi: &Nonlinearity,
    inputs: &[(Signal, Signal)],
    horizon: usize,
    weight: Weight,
) -> Result<f64> {
    empirical_gain_with(g, phi, inputs, horizon, weight, Feedback::Positive)
}

pub fn empirical_gain_with(
    g: &StateSpace,
    phi: &Nonlinearity,
    inputs: &[(Signal, Signal)],
    horizon: usize,
    weight: Weight,
    feedback: Feedback,
) -> Result<f64> {
    let cfg = SipConfig::new(horizon, weight);
    let opts = LoopOptions { x0: None, feedback };
    let ratios: Vec<Option<f64>> = inputs
        .par_iter()
        .map(|(u1, u2)| {
            let run = simulate_loop(g, phi, u1, u2, horizon, &opts)?;
            let nu = pair_seminorm(&run.u1, &run.u2, &cfg)?;
            if nu == 0.0 {
                return Ok(None);
            }
            Ok(Some(pair_seminorm(&run.y1, &run.y2, &cfg)? / nu))
        })
        .collect::<Result<_>>()?;
    ratios
        .into_iter()
        .flatten()
        .reduce(f64::max)
        .ok_or_else(|| Error::Input("every input has zero seminorm".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// `max ‖x[k]‖ / (ρ^k ‖x[0]‖)` over runs and `k ≤ K`.
    pub c_fit: f64,
    pub pass: bool,
    /// Least-squares slope of `log(‖x[k]‖/ρ^k)` over the last quartile, per run.
    pub slopes: Vec<f64>,
}

const SLOPE_TOL: f64 = 1e-6;

/// Runs the autonomous loop (`u = 0`) from each initial state and fits
/// `‖x[k]‖ ≤ c ρ^k ‖x[0]‖`. Zero initial states are skipped.
pub fn verify_exponential_decay(
    g: &StateSpace,
    phi: &Nonlinearity,
    rho: Weight,
    x0_set: &[DVector<f64>],
    k_max: usize,
) -> Result<DecayReport> {
    if k_max == 0 {
        return Err(Error::Parameter("decay check needs K ≥ 1".into()));
    }
    let runs: Vec<Option<(f64, f64)>> = x0_set
        .par_iter()
        .map(|x0| {
            let n0 = x0.norm();
            if n0 == 0.0 {
                return Ok(None);
            }
            let u1 = Signal::zeros(g.inputs(), k_max);
            let u2 = Signal::zeros(g.outputs(), k_max);
            let opts = LoopOptions {
                x0: Some(x0.clone()),
                feedback: Feedback::Positive,
            };
            let run = simulate_loop(g, phi, &u1, &u2, k_max, &opts)?;
            let mut scale = 1.0_f64;
            let mut c_fit = 0.0_f64;
            let mut logs = Vec::new();
            for (k, x) in run.states.iter().take(k_max + 1).enumerate() {
                let ratio = x.norm() / (scale * n0);
                c_fit = c_fit.max(ratio);
                if k >= (3 * k_max) / 4 && ratio > 0.0 && ratio.is_finite() {
                    logs.push((k as f64, ratio.ln()));
                }
                scale *= rho.rho();
            }
            Ok(Some((c_fit, slope(&logs))))
        })
        .collect::<Result<_>>()?;
    let runs: Vec<(f64, f64)> = runs.into_iter().flatten().collect();
    if runs.is_empty() {
        return Err(Error::Input("every initial state is zero".into()));
    }
    let c_fit = runs.iter().map(|r| r.0).fold(0.0, f64::max);
    let slopes: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let pass = c_fit.is_finite() && slopes.iter().all(|&s| s <= SLOPE_TOL);
    Ok(DecayReport { c_fit, pass, slopes })
}

fn slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Draws a nonlinearity satisfying the cumulative `M` constraint at weight `ρ`:
/// time-varying or static gains in the sector, saturated sector maps, and (for symmetric
/// sectors `M12 = 0`) delayed gains.
pub fn random_sector_nonlinearity<R: Rng + ?Sized>(
    m: &QuadSpec,
    dim: usize,
    horizon: usize,
    weight: Weight,
    rng: &mut R,
) -> Result<Nonlinearity> {
    let (lo, hi) = sector_gain_range(m, rng)?;
    let draw = |rng: &mut R| rng.random_range(lo..=hi);
    let [[m11, m12], [_, m22]] = *m.matrix();
    let symmetric = m12 == 0.0 && m11 > 0.0 && m22 < 0.0;
    let choices = if symmetric { 4 } else { 3 };
    Ok(match rng.random_range(0..choices) {
        0 => Nonlinearity::gain(draw(rng)),
        1 => Nonlinearity::TimeVaryingGain {
            gains: (0..=horizon)
                .map(|_| {
                    if dim == 1 {
                        StepGain::Scalar(draw(rng))
                    } else {
                        StepGain::Diagonal((0..dim).map(|_| draw(rng)).collect())
                    }
                })
                .collect(),
        },
        2 => {
            let (a, b) = (draw(rng), draw(rng));
            Nonlinearity::static_map(StaticMap::SectorSaturation {
                lower: a.min(b),
                upper: a.max(b),
                level: rng.random_range(0.05..2.0),
            })
        }
        _ => {
            let delay = rng.random_range(1..=3usize);
            let bound = (-m11 / m22).sqrt() * weight.rho().powi(delay as i32);
            Nonlinearity::DelayGain {
                gain: rng.random_range(-bound..=bound),
                delay,
            }
        }
    })
}

/// Scalar gains `c` with `M11 + 2 M12 c + M22 c² ≥ 0`, as a closed interval.
fn sector_gain_range<R: Rng + ?Sized>(m: &QuadSpec, rng: &mut R) -> Result<(f64, f64)> {
    if let Some((lo, hi)) = m.gain_interval() {
        return Ok((lo, hi));
    }
    let [[m11, m12], [_, m22]] = *m.matrix();
    let f = |c: f64| m11 + 2.0 * m12 * c + m22 * c * c;
    let radius = 10.0 * (1.0 + m11.abs().max(m12.abs()).max(m22.abs()));
    for _ in 0..10_000 {
        let c = rng.random_range(-radius..=radius);
        if f(c) >= 0.0 {
            // grow a small interval of admissible gains around c
            let mut w = 1e-3 * radius;
            while w > 1e-12 && !(f(c - w) >= 0.0 && f(c + w) >= 0.0 && f(c) >= 0.0) {
                w *= 0.5;
            }
            return Ok((c - w, c + w));
        }
    }
    Err(Error::Parameter("no scalar gain satisfies the sector".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::gradient_method_lure;
    use crate::sector::sector_interval_to_m;

    fn static_gain(d: f64) -> StateSpace {
        StateSpace::static_gain(DMatrix::from_element(1, 1, d)).unwrap()
    }

    #[test]
    fn open_loop_when_phi_is_zero() {
        let g = StateSpace::siso(&[0.5], &[1.0], &[1.0], 0.3).unwrap();
        let u1 = Signal::scalar(&[1.0, -2.0, 0.5, 0.0]).unwrap();
        let u2 = Signal::scalar(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let r = interconnect(&g, &Nonlinearity::zero(), &u1, &u2, 3).unwrap();
        assert!(r.y2.stacked().iter().all(|&v| v == 0.0));
        let close = |a: &Signal, b: &Signal| a.stacked().iter().zip(b.stacked()).all(|(x, y)| (x - y).abs() < 1e-14);
        assert!(close(&r.e1, &u1));
        assert!(close(&r.y1, &g.respond(&u1).unwrap()));
        assert!(close(&r.e2, &u2.axpy(1.0, &r.y1).unwrap()));
    }

    #[test]
    fn static_loop_near_singularity() {
        let eps = 1e-3;
        let u1 = Signal::scalar(&[eps, 0.0, 0.0]).unwrap();
        let u2 = Signal::zeros(1, 2);
        let r = interconnect(&static_gain(2.0), &Nonlinearity::gain(0.49), &u1, &u2, 2).unwrap();
        assert!((r.y2.at(0)[0] - 49.0 * eps).abs() < 1e-12);
        let singular = interconnect(&static_gain(2.0), &Nonlinearity::gain(0.5), &u1, &u2, 2);
        assert!(matches!(singular, Err(Error::WellPosedness(_))));
    }

    #[test]
    fn gradient_iteration_reproduced() {
        let (g, _) = gradient_method_lure(1.0, 10.0, 2.0 / 11.0).unwrap();
        let z = Signal::zeros(1, 20);
        let opts = LoopOptions {
            x0: Some(DVector::from_element(1, 1.0)),
            feedback: Feedback::Positive,
        };
        let r = simulate_loop(&g, &Nonlinearity::gain(10.0), &z, &z, 20, &opts).unwrap();
        for (k, x) in r.states.iter().enumerate() {
            assert!((x[0] - (1.0 - 20.0 / 11.0_f64).powi(k as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlinear_feedthrough_uses_fixed_point() {
        let g = StateSpace::siso(&[0.2], &[1.0], &[1.0], 0.5).unwrap();
        let phi = Nonlinearity::static_map(StaticMap::Saturation { level: 0.3 });
        let u1 = Signal::scalar(&[1.0, -1.0, 2.0, 0.1]).unwrap();
        let u2 = Signal::scalar(&[0.5, 0.0, -0.2, 0.0]).unwrap();
        let r = interconnect(&g, &phi, &u1, &u2, 3).unwrap();
        for k in 0..4 {
            assert!((r.y2.at(k)[0] - r.e2.at(k)[0].clamp(-0.3, 0.3)).abs() < 1e-9);
        }
    }

    #[test]
    fn delay_and_replay() {
        let g = StateSpace::siso(&[], &[], &[], 0.5).unwrap();
        let phi = Nonlinearity::DelayGain { gain: 0.8, delay: 1 };
        let u1 = Signal::scalar(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let u2 = Signal::zeros(1, 3);
        let r = interconnect(&g, &phi, &u1, &u2, 3).unwrap();
        assert_eq!(r.y2.at(0)[0], 0.0);
        assert!((r.y2.at(1)[0] - 0.8 * r.e2.at(0)[0]).abs() < 1e-15);
        let replay = Nonlinearity::PairRelation {
            e2: r.e2.clone(),
            y2: r.y2.clone(),
        };
        let again = interconnect(&g, &replay, &u1, &u2, 3).unwrap();
        assert_eq!(again.y1, r.y1);
        let other = Signal::scalar(&[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(interconnect(&g, &replay, &other, &u2, 3), Err(Error::Input(_))));
    }

    #[test]
    fn pointwise_checks() {
        let m01 = sector_interval_to_m(0.0, 1.0).unwrap();
        let sat = Nonlinearity::static_map(StaticMap::Saturation { level: 1.0 });
        assert!(check_pointwise_sector(&sat, &m01, 1000, 0).unwrap());
        let sg = QuadSpec::phi([[1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!(!check_pointwise_sector(&Nonlinearity::gain(2.0), &sg, 10, 0).unwrap());
        let dz = Nonlinearity::static_map(StaticMap::DeadZone { width: 0.5 });
        assert!(check_pointwise_sector(&dz, &m01, 1000, 1).unwrap());
        let d = Nonlinearity::DelayGain { gain: 0.5, delay: 1 };
        assert!(matches!(check_pointwise_sector(&d, &m01, 10, 0), Err(Error::Kind(_))));
    }

    #[test]
    fn empirical_gain_open_loop_static() {
        let u1 = Signal::scalar(&[1.0, -0.5, 0.25]).unwrap();
        let u2 = Signal::zeros(1, 2);
        let r = empirical_gain(&static_gain(2.0), &Nonlinearity::zero(), &[(u1, u2.clone())], 2, Weight::UNIT).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        let zero = empirical_gain(&static_gain(2.0), &Nonlinearity::zero(), &[(u2.clone(), u2)], 2, Weight::UNIT);
        assert!(matches!(zero, Err(Error::Input(_))));
    }

    #[test]
    fn decay_rates_of_gradient_loop() {
        let (g, _) = gradient_method_lure(1.0, 10.0, 2.0 / 11.0).unwrap();
        let x0 = vec![DVector::from_element(1, 1.0), DVector::from_element(1, -3.0)];
        let w = Weight::new(9.0 / 11.0).unwrap();
        for gain in [10.0, 1.0] {
            let r = verify_exponential_decay(&g, &Nonlinearity::gain(gain), w, &x0, 100).unwrap();
            assert!((r.c_fit - 1.0).abs() < 1e-9, "c_fit = {}", r.c_fit);
        }
        let slow = Weight::new(0.7).unwrap();
        let r = verify_exponential_decay(&g, &Nonlinearity::gain(10.0), slow, &x0, 100).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn nonlinearity_json() {
        let s = Nonlinearity::from_json_str(r#"{"kind": "static_map", "map": "saturation", "level": 1.0}"#).unwrap();
        assert_eq!(s, Nonlinearity::static_map(StaticMap::Saturation { level: 1.0 }));
        let t = Nonlinearity::from_json_str(r#"{"kind": "time_varying_gain", "gains": [[0.1], [0.1, 0.2]]}"#);
        assert!(matches!(t, Err(Error::Dimension(_))));
        let t = Nonlinearity::from_json_str(r#"{"kind": "time_varying_gain", "gains": [0.5, 0.25]}"#).unwrap();
        assert!(matches!(t, Nonlinearity::TimeVaryingGain { .. }));
        let p = Nonlinearity::from_json_str(r#"{"kind": "pair_relation", "e2": [[1.0], [2.0]], "y2": [[0.5], [0.5]]}"#)
            .unwrap();
        assert!(p.strictly_causal());
        let round = serde_json::to_string(&s).unwrap();
        assert_eq!(Nonlinearity::from_json_str(&round).unwrap(), s);
    }

    #[test]
    fn random_nonlinearities_respect_the_sector() {
        let mut rng = StdRng::seed_from_u64(7);
        let m = sector_interval_to_m(-0.4, 0.9).unwrap();
        for _ in 0..50 {
            let phi = random_sector_nonlinearity(&m, 1, 10, Weight::UNIT, &mut rng).unwrap();
            if !matches!(phi, Nonlinearity::DelayGain { .. }) {
                assert!(check_pointwise_sector(&phi, &m, 200, 3).unwrap());
            }
        }
    }
}

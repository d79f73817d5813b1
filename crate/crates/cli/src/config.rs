use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

use sector_core::{
    Error, Feedback, Nonlinearity, QuadSpec, Sector, SectorSpec, Side, Signal, StateSpace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// List the classical sector presets.
    Presets,
    /// Search for a certificate on a finite horizon.
    Certify,
    /// Bisect for the smallest certified weight.
    Rate,
    /// Gain bound of the (M, N) pair in a sector file.
    Gamma,
    /// Synthesize a loop trajectory violating a gain bound.
    Violate,
    /// Simulate the loop from input signals.
    Simulate,
    /// Check exponential decay of the autonomous loop.
    Decay,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Presets => "presets",
            Command::Certify => "certify",
            Command::Rate => "rate",
            Command::Gamma => "gamma",
            Command::Violate => "violate",
            Command::Simulate => "simulate",
            Command::Decay => "decay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeedbackArg {
    Positive,
    Negative,
}

impl From<FeedbackArg> for Feedback {
    fn from(f: FeedbackArg) -> Self {
        match f {
            FeedbackArg::Positive => Feedback::Positive,
            FeedbackArg::Negative => Feedback::Negative,
        }
    }
}

pub const MAX_HORIZON: usize = 4096;

/// Robust stability certificates for an LTI system in feedback with a sector-bounded
/// nonlinearity.
#[derive(Debug, Clone, Parser)]
#[command(name = "sector-certify", version)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// State-space JSON `{"A","B","C","D"}`.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Sector JSON, preset or explicit `M`.
    #[arg(long)]
    pub sector: Option<PathBuf>,
    /// Nonlinearity JSON.
    #[arg(long)]
    pub nonlinearity: Option<PathBuf>,
    /// Input signal `u1` (CSV or JSON); zero when absent.
    #[arg(long)]
    pub u1: Option<PathBuf>,
    /// Input signal `u2` (CSV or JSON); zero when absent.
    #[arg(long)]
    pub u2: Option<PathBuf>,
    /// Initial state as comma-separated values; repeat for several runs.
    #[arg(long = "x0", allow_hyphen_values = true)]
    pub x0: Vec<String>,
    /// Largest horizon `T`.
    #[arg(long, default_value_t = sector_core::certify::DEFAULT_HORIZON)]
    pub horizon: usize,
    /// Exponential weight in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Lower end of the rate search.
    #[arg(long, default_value_t = 0.1)]
    pub rho_lo: f64,
    /// Upper end of the rate search.
    #[arg(long, default_value_t = 1.0)]
    pub rho_hi: f64,
    /// Gain bound to violate.
    #[arg(long = "gamma")]
    pub gamma_target: Option<f64>,
    /// Bisection tolerance of the rate search.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Frequency-screen points for `certify`, sweep points for `rate`; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub grid: usize,
    /// Steps of the decay run.
    #[arg(long, default_value_t = 200)]
    pub k_max: usize,
    /// Samples for the pointwise sector check.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Random input pairs for the empirical gain in `simulate`.
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loop convention; defaults to the sector file's tag, else positive.
    #[arg(long, value_enum)]
    pub feedback: Option<FeedbackArg>,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Trajectory or witness file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Format of the trajectory or witness file.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Input role (`system`, `sector`, ...) or `options`.
    pub source: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.source, self.field, self.message)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything parsed from the input files.
#[derive(Debug, Default)]
pub struct Inputs {
    pub system: Option<StateSpace>,
    pub sector: Option<Sector>,
    pub nonlinearity: Option<Nonlinearity>,
    pub u1: Option<Signal>,
    pub u2: Option<Signal>,
    pub x0: Vec<DVector<f64>>,
    pub feedback: Feedback,
    pub digests: BTreeMap<&'static str, FileDigest>,
}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn push(&mut self, source: &str, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic {
            source: source.into(),
            field: field.into(),
            message: message.into(),
        });
    }
}

fn error_field(e: &Error, fallback: &str) -> String {
    match e {
        Error::Json(j) if j.line() > 0 => format!("line {} column {}", j.line(), j.column()),
        _ => fallback.into(),
    }
}

fn read(role: &'static str, path: &Path, inputs: &mut Inputs, d: &mut Collector) -> Option<Vec<u8>> {
    match std::fs::read(path) {
        Ok(bytes) => {
            inputs.digests.insert(
                role,
                FileDigest {
                    path: path.display().to_string(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                },
            );
            Some(bytes)
        }
        Err(e) => {
            d.push(role, "path", format!("cannot read {}: {e}", path.display()));
            None
        }
    }
}

fn text(role: &str, bytes: Vec<u8>, d: &mut Collector) -> Option<String> {
    String::from_utf8(bytes)
        .map_err(|_| d.push(role, "file", "not valid UTF-8"))
        .ok()
}

fn load_sector(s: &str, d: &mut Collector) -> Option<Sector> {
    let spec = match SectorSpec::from_json_str(s) {
        Ok(spec) => spec,
        Err(e) => {
            d.push("sector", &error_field(&e, "file"), e.to_string());
            return None;
        }
    };
    match spec {
        SectorSpec::Explicit { m, n, side, feedback } => {
            if side != Side::Phi {
                d.push("sector", "side", "explicit sector M must be Phi-side (\"phi\")");
                return None;
            }
            let m = QuadSpec::new(m, Side::Phi, feedback).map_err(|e| d.push("sector", "M", e.to_string()));
            let n = n
                .map(|n| QuadSpec::new(n, Side::G, feedback))
                .transpose()
                .map_err(|e| d.push("sector", "N", e.to_string()));
            Some(Sector { m: m.ok()?, n: n.ok()?, pair: None })
        }
        preset => preset.resolve().map_err(|e| d.push("sector", "params", e.to_string())).ok(),
    }
}

fn parse_state(s: &str) -> std::result::Result<DVector<f64>, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err("entries must be finite".into());
    }
    Ok(DVector::from_vec(v))
}

fn require(cfg: &RunConfig, d: &mut Collector) {
    let need: &[(&str, bool)] = match cfg.command {
        Command::Presets => &[],
        Command::Gamma => &[("sector", cfg.sector.is_some())],
        Command::Certify | Command::Rate => &[("system", cfg.system.is_some()), ("sector", cfg.sector.is_some())],
        Command::Violate => &[
            ("system", cfg.system.is_some()),
            ("sector", cfg.sector.is_some()),
            ("gamma", cfg.gamma_target.is_some()),
        ],
        Command::Simulate => &[("system", cfg.system.is_some()), ("nonlinearity", cfg.nonlinearity.is_some())],
        Command::Decay => &[
            ("system", cfg.system.is_some()),
            ("nonlinearity", cfg.nonlinearity.is_some()),
            ("x0", !cfg.x0.is_empty()),
        ],
    };
    for (flag, present) in need {
        if !present {
            d.push("options", flag, format!("--{flag} is required by '{}'", cfg.command.name()));
        }
    }
}

fn ranges(cfg: &RunConfig, d: &mut Collector) {
    if !(cfg.rho > 0.0 && cfg.rho <= 1.0) {
        d.push("options", "rho", format!("must lie in (0, 1], got {}", cfg.rho));
    }
    if cfg.horizon > MAX_HORIZON {
        d.push("options", "horizon", format!("must be at most {MAX_HORIZON}, got {}", cfg.horizon));
    }
    if cfg.command == Command::Rate {
        if !(cfg.rho_lo > 0.0 && cfg.rho_lo < cfg.rho_hi && cfg.rho_hi <= 1.0) {
            d.push(
                "options",
                "rho-lo/rho-hi",
                format!("need 0 < rho-lo < rho-hi <= 1, got [{}, {}]", cfg.rho_lo, cfg.rho_hi),
            );
        }
        if !(cfg.tol > 0.0 && cfg.tol.is_finite()) {
            d.push("options", "tol", format!("must be positive, got {}", cfg.tol));
        }
    }
    if let Some(g) = cfg.gamma_target {
        if !(g > 0.0 && g.is_finite()) {
            d.push("options", "gamma", format!("must be positive and finite, got {g}"));
        }
    }
    if cfg.command == Command::Decay && cfg.k_max == 0 {
        d.push("options", "k-max", "must be at least 1");
    }
    if cfg.samples == 0 {
        d.push("options", "samples", "must be at least 1");
    }
}

/// Parses and cross-checks every input the command needs. The returned inputs are
/// usable only when the diagnostics are empty.
pub fn load(cfg: &RunConfig) -> (Inputs, Vec<Diagnostic>) {
    let mut d = Collector(Vec::new());
    let mut inputs = Inputs::default();
    require(cfg, &mut d);
    ranges(cfg, &mut d);

    if let Some(p) = &cfg.system {
        if let Some(s) = read("system", p, &mut inputs, &mut d).and_then(|b| text("system", b, &mut d)) {
            match StateSpace::from_json_str(&s) {
                Ok(g) => inputs.system = Some(g),
                Err(e) => d.push("system", &error_field(&e, "matrices"), e.to_string()),
            }
        }
    }
    if let Some(p) = &cfg.sector {
        if let Some(s) = read("sector", p, &mut inputs, &mut d).and_then(|b| text("sector", b, &mut d)) {
            inputs.sector = load_sector(&s, &mut d);
        }
    }
    if let Some(p) = &cfg.nonlinearity {
        if let Some(s) = read("nonlinearity", p, &mut inputs, &mut d).and_then(|b| text("nonlinearity", b, &mut d)) {
            match Nonlinearity::from_json_str(&s) {
                Ok(phi) => inputs.nonlinearity = Some(phi),
                Err(e) => d.push("nonlinearity", &error_field(&e, "kind"), e.to_string()),
            }
        }
    }
    for (role, path, slot) in [("u1", &cfg.u1, &mut inputs.u1), ("u2", &cfg.u2, &mut inputs.u2)] {
        let Some(p) = path else { continue };
        let digest = std::fs::read(p).map(|b| FileDigest {
            path: p.display().to_string(),
            sha256: hex::encode(Sha256::digest(&b)),
        });
        match (digest, Signal::load(p)) {
            (Ok(dg), Ok(s)) => {
                inputs.digests.insert(role, dg);
                *slot = Some(s);
            }
            (Err(e), _) => d.push(role, "path", format!("cannot read {}: {e}", p.display())),
            (_, Err(e)) => d.push(role, &error_field(&e, "samples"), e.to_string()),
        }
    }
    for (i, s) in cfg.x0.iter().enumerate() {
        match parse_state(s) {
            Ok(v) => inputs.x0.push(v),
            Err(e) => d.push("options", &format!("x0[{i}]"), e),
        }
    }

    let sector_feedback = inputs.sector.as_ref().map(|s| s.m.feedback());
    inputs.feedback = match (cfg.feedback.map(Feedback::from), sector_feedback) {
        (Some(f), Some(s)) if f != s => {
            d.push("options", "feedback", format!("--feedback {f:?} contradicts the sector file's {s:?} tag"));
            f
        }
        (Some(f), _) => f,
        (None, Some(s)) => s,
        (None, None) => Feedback::Positive,
    };

    cross_check(cfg, &inputs, &mut d);
    (inputs, d.0)
}

fn cross_check(cfg: &RunConfig, inputs: &Inputs, d: &mut Collector) {
    if cfg.command == Command::Gamma {
        if let Some(s) = &inputs.sector {
            if s.n.is_none() {
                d.push("sector", "N", "'gamma' needs a sector file with N (a preset or an explicit N)");
            }
        }
    }
    let Some(g) = &inputs.system else { return };
    let needs_loop = !matches!(cfg.command, Command::Presets | Command::Gamma);
    if needs_loop && g.inputs() != g.outputs() {
        d.push(
            "system",
            "D",
            format!("the loop needs a square system, got {} outputs and {} inputs", g.outputs(), g.inputs()),
        );
        return;
    }
    let dim = g.outputs();
    if let Some(phi) = &inputs.nonlinearity {
        if let Err(e) = phi.check_for(dim, cfg.horizon) {
            d.push("nonlinearity", "dimension", e.to_string());
        }
    }
    for (role, s) in [("u1", &inputs.u1), ("u2", &inputs.u2)] {
        if let Some(s) = s {
            if s.dim() != dim {
                d.push(role, "dimension", format!("signal has dim {}, the system has {dim} inputs", s.dim()));
            }
        }
    }
    for (i, x) in inputs.x0.iter().enumerate() {
        if x.len() != g.states() {
            d.push(
                "options",
                &format!("x0[{i}]"),
                format!("state has {} entries, the system has {} states", x.len(), g.states()),
            );
        }
    }
    if cfg.command == Command::Decay && g.states() == 0 {
        d.push("system", "A", "decay needs at least one state");
    }
}

/// All schema and range violations; empty exactly when the command may run.
pub fn validate_inputs(cfg: &RunConfig) -> Vec<Diagnostic> {
    load(cfg).1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("sector-certify").chain(args.iter().copied())).unwrap()
    }

    fn file(dir: &Path, name: &str, text: &str) -> String {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    }

    #[test]
    fn non_symmetric_m_names_the_entry() {
        let dir = tempfile::tempdir().unwrap();
        let s = file(dir.path(), "s.json", r#"{"M": [[-1, 0.5], [0.4, -1]]}"#);
        let d = validate_inputs(&cfg(&["gamma", "--sector", &s]));
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].source.as_str(), d[0].field.as_str()), ("sector", "M"));
        assert!(d[0].message.contains("(1,2)"));
    }

    #[test]
    fn rho_out_of_range() {
        let d = validate_inputs(&cfg(&["presets", "--rho", "1.5"]));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "rho");
    }

    #[test]
    fn nonlinearity_dimension_must_match_system() {
        let dir = tempfile::tempdir().unwrap();
        let g = file(dir.path(), "g.json", r#"{"A": [[0.5]], "B": [[1]], "C": [[1]], "D": [[0]]}"#);
        let phi = file(dir.path(), "phi.json", r#"{"kind": "pair_relation", "e2": [[1, 2]], "y2": [[0, 0]]}"#);
        let d = validate_inputs(&cfg(&["simulate", "--system", &g, "--nonlinearity", &phi, "--horizon", "0"]));
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].source.as_str(), d[0].field.as_str()), ("nonlinearity", "dimension"));
    }

    #[test]
    fn valid_inputs_give_no_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let g = file(dir.path(), "g.json", r#"{"A": [[0.5]], "B": [[1]], "C": [[1]], "D": [[0]]}"#);
        let s = file(dir.path(), "s.json", r#"{"preset": "small_gain", "params": {"gamma1": 0.5, "gamma2": 1.5}}"#);
        assert!(validate_inputs(&cfg(&["certify", "--system", &g, "--sector", &s])).is_empty());
        let (inputs, d) = load(&cfg(&["certify", "--system", &g, "--sector", &s]));
        assert!(d.is_empty());
        assert!(inputs.digests.contains_key("system") && inputs.digests.contains_key("sector"));
    }

    #[test]
    fn feedback_flag_must_agree_with_sector_tag() {
        let dir = tempfile::tempdir().unwrap();
        let s = file(dir.path(), "s.json", r#"{"M": [[0, 0.5], [0.5, -1]], "feedback": "negative"}"#);
        let d = validate_inputs(&cfg(&["gamma", "--sector", &s, "--feedback", "positive"]));
        assert!(d.iter().any(|d| d.field == "feedback"));
        assert!(d.iter().any(|d| d.field == "N"));
    }

    #[test]
    fn state_lists_parse() {
        assert_eq!(parse_state("1, -2.5").unwrap().as_slice(), &[1.0, -2.5]);
        assert!(parse_state("1,x").is_err());
        assert!(parse_state("inf").is_err());
    }
}

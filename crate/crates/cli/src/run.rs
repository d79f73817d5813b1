use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Map, Value};

use sector_core::certify::{check_frequency_condition, rate_grid};
use sector_core::sim::empirical_gain_with;
use sector_core::*;

use crate::config::{load, Command, Format, Inputs, RunConfig};
use crate::report::{to_json, Report, Status};

#[derive(Serialize)]
struct Options {
    horizon: usize,
    rho: f64,
    rho_lo: f64,
    rho_hi: f64,
    gamma: Option<f64>,
    tol: f64,
    grid: usize,
    k_max: usize,
    samples: usize,
    trials: usize,
    seed: u64,
    feedback: Feedback,
    format: Format,
}

fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn status_of(e: &Error) -> Status {
    if e.is_numerical() || matches!(e, Error::WellPosedness(_)) {
        Status::NumericalFailure
    } else {
        Status::InputError
    }
}

/// What a command produced: a status, the result body, and an optional data file.
struct Outcome {
    status: Status,
    result: Value,
    data: Option<Data>,
}

enum Data {
    Json(Value),
    Csv(Vec<String>, Vec<Vec<f64>>),
}

fn outcome(status: Status, result: Value) -> Outcome {
    Outcome { status, result, data: None }
}

/// Runs the command and writes the report; returns the exit code.
pub fn run(cfg: &RunConfig) -> u8 {
    let (inputs, diagnostics) = load(cfg);
    let options = value(&Options {
        horizon: cfg.horizon,
        rho: cfg.rho,
        rho_lo: cfg.rho_lo,
        rho_hi: cfg.rho_hi,
        gamma: cfg.gamma_target,
        tol: cfg.tol,
        grid: cfg.grid,
        k_max: cfg.k_max,
        samples: cfg.samples,
        trials: cfg.trials,
        seed: cfg.seed,
        feedback: inputs.feedback,
        format: cfg.format,
    });
    let mut report = Report {
        tool: "sector-certify",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.name(),
        status: Status::InputError,
        exit_code: 2,
        inputs: inputs.digests.clone(),
        options,
        diagnostics,
        error: None,
        result: Value::Null,
    };
    if !report.diagnostics.is_empty() {
        for d in &report.diagnostics {
            eprintln!("error: {d}");
        }
    } else {
        match dispatch(cfg, &inputs).and_then(|o| write_data(cfg, o)) {
            Ok((status, result)) => {
                report.status = status;
                report.result = result;
            }
            Err(e) => {
                eprintln!("error: {e}");
                report.status = status_of(&e);
                report.error = Some(e.to_string());
            }
        }
    }
    report.exit_code = report.status.exit_code();
    let text = to_json(&report).expect("report serializes");
    let written = match &cfg.output {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write report {}: {e}", p.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| format!("cannot write report: {e}")),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 2;
    }
    report.exit_code
}

fn write_data(cfg: &RunConfig, o: Outcome) -> Result<(Status, Value)> {
    let Some(data) = o.data else {
        return Ok((o.status, o.result));
    };
    let default = match cfg.format {
        Format::Json => "witness.json",
        Format::Csv => "witness.csv",
    };
    let path = match (&cfg.data, cfg.command) {
        (Some(p), _) => p.clone(),
        (None, Command::Violate) => default.into(),
        (None, _) => return Ok((o.status, o.result)),
    };
    match (cfg.format, data) {
        (Format::Json, Data::Json(v)) => std::fs::write(&path, to_json(&v)?)?,
        (Format::Csv, Data::Csv(header, rows)) => write_csv(&path, &header, &rows)?,
        _ => return Err(Error::Consistency("data file format does not match the command output".into())),
    }
    let mut result = o.result;
    if let Value::Object(m) = &mut result {
        m.insert("data_file".into(), json!(path.display().to_string()));
    }
    Ok((o.status, result))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(header)?;
    for (k, r) in rows.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(r.iter().skip(1).map(|v| format!("{v:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn dispatch(cfg: &RunConfig, inputs: &Inputs) -> Result<Outcome> {
    let weight = Weight::new(cfg.rho)?;
    match cfg.command {
        Command::Presets => Ok(outcome(Status::Ok, json!({ "presets": value(&catalog()) }))),
        Command::Gamma => gamma(inputs),
        Command::Certify => certify_cmd(cfg, inputs, weight),
        Command::Rate => rate(cfg, inputs),
        Command::Violate => violate(cfg, inputs, weight),
        Command::Simulate => simulate(cfg, inputs, weight),
        Command::Decay => decay(cfg, inputs, weight),
    }
}

fn system(inputs: &Inputs) -> &StateSpace {
    inputs.system.as_ref().expect("validated")
}

fn sector(inputs: &Inputs) -> &Sector {
    inputs.sector.as_ref().expect("validated")
}

fn gamma(inputs: &Inputs) -> Result<Outcome> {
    let s = sector(inputs);
    let n = s.n.as_ref().expect("validated");
    let c = compatibility(&s.m, n)?;
    let mut r = Map::new();
    r.insert("M".into(), value(&s.m));
    r.insert("N".into(), value(n));
    r.insert("compatibility".into(), value(&c));
    if let Some(p) = &s.pair {
        r.insert("preset".into(), value(p));
    }
    let status = if c.ok {
        r.insert("bound".into(), value(&gamma_bound(&s.m, n)?));
        Status::Compatible
    } else {
        Status::Incompatible
    };
    Ok(outcome(status, Value::Object(r)))
}

fn certify_cmd(cfg: &RunConfig, inputs: &Inputs, weight: Weight) -> Result<Outcome> {
    let (g, s) = (system(inputs), sector(inputs));
    let out = certify(g, &s.m, cfg.horizon, weight)?;
    let mut r = Map::new();
    let status = if out.certificate().is_some() {
        Status::Certified
    } else {
        Status::NotCertified
    };
    r.insert("outcome".into(), value(&out));
    if let Some(n) = &s.n {
        let hard = check_hard_condition(g, n, cfg.horizon, weight)?;
        let c = compatibility(&s.m, n)?;
        let bound = if c.ok && hard.passed() {
            Some(gamma_bound(&s.m, n)?)
        } else {
            None
        };
        r.insert(
            "supplied_n".into(),
            json!({ "N": value(n), "compatibility": value(&c), "hard_condition": value(&hard), "bound": value(&bound) }),
        );
    }
    if cfg.grid > 0 {
        if let Some(c) = out.certificate() {
            let screen = match check_frequency_condition(g, &c.n, cfg.grid, weight) {
                Ok(f) => value(&f),
                Err(Error::FrequencyDomain(msg)) => json!({ "skipped": msg }),
                Err(e) => return Err(e),
            };
            r.insert("frequency_screen".into(), screen);
        }
    }
    Ok(outcome(status, Value::Object(r)))
}

fn rate(cfg: &RunConfig, inputs: &Inputs) -> Result<Outcome> {
    let (g, s) = (system(inputs), sector(inputs));
    let best = best_rate(g, &s.m, cfg.rho_lo, cfg.rho_hi, cfg.tol, cfg.horizon)?;
    let mut r = Map::new();
    r.insert("rho_star".into(), json!(best));
    if let Some(rho) = best {
        let c = certify(g, &s.m, cfg.horizon, Weight::new(rho)?)?;
        r.insert("certificate".into(), value(&c));
    }
    if cfg.grid > 0 {
        let rhos: Vec<f64> = (0..cfg.grid)
            .map(|i| {
                let t = if cfg.grid == 1 { 1.0 } else { i as f64 / (cfg.grid - 1) as f64 };
                cfg.rho_lo + t * (cfg.rho_hi - cfg.rho_lo)
            })
            .collect();
        let sweep = rate_grid(g, &s.m, &rhos, cfg.horizon)?;
        let rows: Vec<Value> = sweep.iter().map(|(rho, ok)| json!({ "rho": rho, "certified": ok })).collect();
        r.insert("grid".into(), Value::Array(rows));
    }
    let status = if best.is_some() { Status::Certified } else { Status::NotCertified };
    Ok(outcome(status, Value::Object(r)))
}

fn signal_columns(names: &[(&str, &Signal)], horizon: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut header = vec!["k".to_string()];
    for (name, s) in names {
        if s.dim() == 1 {
            header.push((*name).into());
        } else {
            header.extend((0..s.dim()).map(|i| format!("{name}_{i}")));
        }
    }
    let rows = (0..=horizon)
        .map(|k| {
            let mut row = vec![k as f64];
            for (_, s) in names {
                row.extend(s.get_or_zero(k).iter());
            }
            row
        })
        .collect();
    (header, rows)
}

fn violate(cfg: &RunConfig, inputs: &Inputs, weight: Weight) -> Result<Outcome> {
    let (g, s) = (system(inputs), sector(inputs));
    let gamma = cfg.gamma_target.expect("validated");
    let found = find_violation(g, &s.m, gamma, cfg.horizon, weight)?;
    let Some(w) = found else {
        return Ok(outcome(Status::NoViolation, json!({ "witness": null })));
    };
    let data = match cfg.format {
        Format::Json => Data::Json(value(&w)),
        Format::Csv => {
            let (h, rows) = signal_columns(
                &[("u1", &w.u.0), ("u2", &w.u.1), ("e1", &w.e.0), ("e2", &w.e.1), ("y1", &w.y.0), ("y2", &w.y.1)],
                w.horizon,
            );
            Data::Csv(h, rows)
        }
    };
    Ok(Outcome {
        status: Status::ViolationFound,
        result: json!({ "witness": value(&w) }),
        data: Some(data),
    })
}

fn simulate(cfg: &RunConfig, inputs: &Inputs, weight: Weight) -> Result<Outcome> {
    let g = system(inputs);
    let phi = inputs.nonlinearity.as_ref().expect("validated");
    let t = cfg.horizon;
    let dim = g.inputs();
    let u1 = inputs.u1.clone().unwrap_or_else(|| Signal::zeros(dim, t));
    let u2 = inputs.u2.clone().unwrap_or_else(|| Signal::zeros(dim, t));
    let opts = LoopOptions {
        x0: inputs.x0.first().cloned(),
        feedback: inputs.feedback,
    };
    let run = simulate_loop(g, phi, &u1, &u2, t, &opts)?;
    let sip_cfg = SipConfig::new(t, weight);
    let mut r = Map::new();
    r.insert(
        "norms".into(),
        json!({
            "u": pair_seminorm(&run.u1, &run.u2, &sip_cfg)?,
            "y": pair_seminorm(&run.y1, &run.y2, &sip_cfg)?,
            "e": pair_seminorm(&run.e1, &run.e2, &sip_cfg)?,
        }),
    );
    if let Some(s) = &inputs.sector {
        let cumulative = quad_form(&run.e2, &run.y2, s.m.matrix(), &sip_cfg)?;
        let mut sec = Map::new();
        sec.insert("M".into(), value(&s.m));
        sec.insert("cumulative_form".into(), json!(cumulative));
        match check_pointwise_sector(phi, &s.m, cfg.samples, cfg.seed) {
            Ok(ok) => sec.insert("pointwise".into(), json!(ok)),
            Err(Error::Kind(msg)) => sec.insert("pointwise".into(), json!({ "skipped": msg })),
            Err(e) => return Err(e),
        };
        r.insert("sector".into(), Value::Object(sec));
    }
    if cfg.trials > 0 {
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        let draw = |rng: &mut StdRng| {
            let rows: Vec<Vec<f64>> = (0..=t)
                .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            Signal::new(rows)
        };
        let pairs = (0..cfg.trials)
            .map(|_| Ok((draw(&mut rng)?, draw(&mut rng)?)))
            .collect::<Result<Vec<_>>>()?;
        let gain = empirical_gain_with(g, phi, &pairs, t, weight, inputs.feedback)?;
        r.insert("empirical_gain".into(), json!(gain));
    }
    let (header, rows) = signal_columns(
        &[("e1", &run.e1), ("e2", &run.e2), ("y1", &run.y1), ("y2", &run.y2)],
        t,
    );
    let mut header = header;
    let mut rows = rows;
    for i in 0..g.states() {
        header.push(format!("x{i}"));
    }
    for (row, x) in rows.iter_mut().zip(&run.states) {
        row.extend(x.iter());
    }
    let data = match cfg.format {
        Format::Csv => Data::Csv(header, rows),
        Format::Json => Data::Json(json!({
            "u1": value(&run.u1), "u2": value(&run.u2), "e1": value(&run.e1), "e2": value(&run.e2),
            "y1": value(&run.y1), "y2": value(&run.y2),
            "states": run.states.iter().map(|x| x.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        })),
    };
    if cfg.data.is_none() {
        if let Data::Json(v) = &data {
            r.insert("trajectory".into(), v.clone());
        }
    }
    Ok(Outcome {
        status: Status::Ok,
        result: Value::Object(r),
        data: Some(data),
    })
}

fn decay(cfg: &RunConfig, inputs: &Inputs, weight: Weight) -> Result<Outcome> {
    let phi = inputs.nonlinearity.as_ref().expect("validated");
    // negative feedback is positive feedback around -G, with the same state norms
    let g = match inputs.feedback {
        Feedback::Positive => system(inputs).clone(),
        Feedback::Negative => system(inputs).negated(),
    };
    let r = verify_exponential_decay(&g, phi, weight, &inputs.x0, cfg.k_max)?;
    let status = if r.pass { Status::DecayVerified } else { Status::DecayFailed };
    Ok(outcome(status, value(&r)))
}

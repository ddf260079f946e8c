//! Command dispatch and report emission.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use spherefield::estimator::{
    estimate, moment_estimate, pull_back, run_batches, weighted_mean, EstimatorError, Model,
    PulledBackFunctional,
};
use spherefield::gaussian::build_decomposition;
use spherefield::harmonics::{sobolev_norm, SpectralField};
use spherefield::interaction::{Lagrangian, ZeroLagrangian};
use spherefield::symmetry::{
    default_rotations, markov_factorization_check, rotation_invariance_suite, rp_deviation,
    rp_gram, translation_sweep, InvarianceMode, SymmetryError,
};
use thiserror::Error;

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    Estimate,
    RpTest,
    MarkovTest,
    InvarianceTest,
    TranslationTest,
    ScheduleSweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Estimate => "estimate",
            Command::RpTest => "rp-test",
            Command::MarkovTest => "markov-test",
            Command::InvarianceTest => "invariance-test",
            Command::TranslationTest => "translation-test",
            Command::ScheduleSweep => "schedule-sweep",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Gaussian(#[from] spherefield::gaussian::GaussianError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One comma-separated output table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, headers: &[&str]) -> Self {
        Self { name: name.into(), headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Result of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub results: Value,
    /// Result fields that are exact rather than Monte Carlo estimates.
    pub exact: Vec<&'static str>,
    pub warnings: Vec<String>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport<'a> {
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub config: &'a RunConfig,
    pub warnings: &'a [String],
    pub exact: &'a [&'static str],
    pub results: &'a Value,
}

fn lagrangian(cfg: &RunConfig, n: u32) -> Arc<dyn Lagrangian> {
    cfg.lagrangian.at(n, cfg.laplacian_powers)
}

fn model(cfg: &RunConfig, n: u32, l_max: usize, lag: Arc<dyn Lagrangian>) -> Result<Model, RunError> {
    Ok(Model::from_schedule(&cfg.schedule, n, l_max, &cfg.mollifier, lag, cfg.laplacian_powers)?)
}

fn pulled(cfg: &RunConfig, radius: f64, l_max: usize) -> Result<Vec<PulledBackFunctional>, RunError> {
    cfg.functionals_or_family()
        .iter()
        .map(|f| Ok(pull_back(f, radius, l_max)?))
        .collect()
}

fn schedule_warnings(cfg: &RunConfig, m: &Model) -> Vec<String> {
    let mut w = Vec::new();
    if !cfg.schedule_rp_valid {
        w.push("schedule is not RP-valid: 𝔐ₙRₙᴰ/Λₙ does not tend to zero".to_string());
    }
    if !m.kernel.is_resolved() {
        w.push(format!(
            "mollifier support {:.3e} is below the grid spacing; the kernel acts as the identity at this band limit",
            m.kernel.support_angle()
        ));
    }
    w
}

fn sample(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let m = model(cfg, cfg.n, cfg.l_max, lagrangian(cfg, cfg.n))?;
    let sampler = m.sampler(cfg.k, cfg.seed)?;
    let funcs = pulled(cfg, m.radius, cfg.l_max)?;
    let rows = run_batches(cfg.samples, |start, count| {
        let batch = sampler.sample_batch(start, count);
        let actions = m.actions(&batch)?;
        let vals: Vec<Vec<f64>> = funcs.iter().map(|f| f.evaluate_batch(&batch)).collect::<Result<_, _>>()?;
        Ok((0..count)
            .map(|i| {
                let phi = SpectralField::from_coeffs(m.dim, m.radius, m.l_max, batch.column(i).as_slice().to_vec())
                    .expect("shape");
                let mut row = vec![-actions[i].full(), sobolev_norm(&phi, -cfg.k)];
                row.extend(vals.iter().map(|v| v[i]));
                row
            })
            .collect())
    })?;
    let mut headers = vec!["index".to_string(), "log_weight".into(), "hk_norm".into()];
    headers.extend((0..funcs.len()).map(|j| format!("functional_{j}")));
    let mut table = Table { name: "samples".into(), headers, rows: Vec::new() };
    for (i, r) in rows.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(r.iter().map(|v| num(*v)));
        table.push(row);
    }
    let lw: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let means: Vec<Value> = (0..funcs.len())
        .map(|j| {
            let v: Vec<f64> = rows.iter().map(|r| r[2 + j]).collect();
            Ok(json!(weighted_mean(&lw, &v)?))
        })
        .collect::<Result<_, EstimatorError>>()?;
    let moment = moment_estimate(&m, &sampler, cfg.samples)?;
    Ok(Outcome {
        passed: true,
        results: json!({
            "n": cfg.n,
            "radius": m.radius,
            "lambda": m.kernel.lambda(),
            "kernel_resolved": m.kernel.is_resolved(),
            "moment_hk_norm": moment,
            "functional_means": means,
        }),
        exact: vec!["n", "radius", "lambda", "kernel_resolved"],
        warnings: schedule_warnings(cfg, &m),
        tables: vec![table],
    })
}

fn estimate_cmd(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let m = model(cfg, cfg.n, cfg.l_max, lagrangian(cfg, cfg.n))?;
    let sampler = m.sampler(cfg.k, cfg.seed)?;
    let mut table =
        Table::new("estimates", &["index", "kind", "value", "std_error", "ess", "samples", "sup_bound"]);
    let mut reports = Vec::new();
    let mut passed = true;
    for (i, f) in pulled(cfg, m.radius, cfg.l_max)?.iter().enumerate() {
        let r = estimate(f, &m, &sampler, cfg.samples)?;
        passed &= r.value.abs() <= r.sup_bound;
        table.push(vec![
            i.to_string(),
            f.kind().name().into(),
            num(r.value),
            num(r.std_error),
            num(r.ess),
            r.samples.to_string(),
            num(r.sup_bound),
        ]);
        reports.push(r);
    }
    Ok(Outcome {
        passed,
        results: json!({ "n": cfg.n, "estimates": reports }),
        exact: vec!["n", "estimates.sup_bound", "estimates.samples"],
        warnings: schedule_warnings(cfg, &m),
        tables: vec![table],
    })
}

fn rp_test(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let m = model(cfg, cfg.n, cfg.l_max, lagrangian(cfg, cfg.n))?;
    let sampler = m.sampler(cfg.k, cfg.seed)?;
    let family = pulled(cfg, m.radius, cfg.l_max)?;
    let r = rp_gram(&family, &m, &sampler, cfg.samples)?;
    let mut table = Table::new("gram", &["i", "j", "value", "std_error"]);
    for i in 0..r.p {
        for j in 0..r.p {
            table.push(vec![i.to_string(), j.to_string(), num(r.gram[i][j]), num(r.std_errors[i][j])]);
        }
    }
    Ok(Outcome {
        passed: r.passes,
        exact: vec!["p", "deviation_bound", "collar_excluded", "schedule_rp_valid"],
        warnings: schedule_warnings(cfg, &m),
        results: json!(r),
        tables: vec![table],
    })
}

fn markov_test(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let m = model(cfg, cfg.n, cfg.l_max, lagrangian(cfg, cfg.n))?;
    let f = pulled(cfg, m.radius, cfg.l_max)?.remove(0);
    let d = build_decomposition(
        cfg.dim,
        m.radius,
        cfg.l_max,
        m.delta,
        cfg.schedule.alpha,
        cfg.decomposition_order,
    )?;
    let r = markov_factorization_check(&f, &m, &d, cfg.seed, cfg.samples)?;
    let mut table = Table::new("markov", &["lhs", "rhs", "std_error", "plus_mean", "minus_mean"]);
    table.push(vec![num(r.lhs), num(r.rhs), num(r.std_error), num(r.plus_mean), num(r.minus_mean)]);
    Ok(Outcome {
        passed: r.passes && r.theta_passes,
        exact: vec!["n", "plus_modes", "raw_overlap", "min_concentration"],
        warnings: schedule_warnings(cfg, &m),
        results: json!({
            "check": r,
            "plus_modes": d.plus_modes(),
            "raw_overlap": d.raw_overlap(),
            "min_concentration": d.min_concentration(),
            "n": cfg.n,
        }),
        tables: vec![table],
    })
}

fn invariance_test(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let m = model(cfg, cfg.n, cfg.l_max, lagrangian(cfg, cfg.n))?;
    let sampler = m.sampler(cfg.k, cfg.seed)?;
    let f = pulled(cfg, m.radius, cfg.l_max)?.remove(0);
    let rotations = default_rotations(cfg.dim);
    let mut table = Table::new("invariance", &["mode", "rotation", "value", "std_error"]);
    let standard = rotation_invariance_suite(&f, &rotations, &m, &sampler, cfg.samples, InvarianceMode::Standard)?;
    let mut reports = vec![standard];
    if cfg.invariance.crn {
        // The common-random-numbers tolerance only applies without interaction.
        let flat = m.with_lagrangian(Arc::new(ZeroLagrangian { arity: cfg.laplacian_powers as usize + 1 }));
        reports.push(rotation_invariance_suite(
            &f,
            &rotations,
            &flat,
            &sampler,
            cfg.samples,
            InvarianceMode::CommonRandomNumbers,
        )?);
    }
    for r in &reports {
        let mode = match r.mode {
            InvarianceMode::Standard => "standard",
            InvarianceMode::CommonRandomNumbers => "crn",
        };
        for e in &r.estimates {
            table.push(vec![mode.into(), e.label.clone(), num(e.estimate.value), num(e.estimate.std_error)]);
        }
    }
    Ok(Outcome {
        passed: reports.iter().all(|r| r.passes),
        exact: vec![],
        warnings: schedule_warnings(cfg, &m),
        results: json!({ "suites": reports }),
        tables: vec![table],
    })
}

fn translation_test(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let t = &cfg.translation;
    let rows = translation_sweep(&t.bump, &t.t, &t.radii, cfg.k, t.l_per_radius)?;
    let decreasing = rows.windows(2).all(|w| w[1].residual < w[0].residual);
    let mut table = Table::new("translation", &["radius", "l_max", "residual", "relative"]);
    for r in &rows {
        table.push(vec![num(r.radius), r.l_max.to_string(), num(r.residual), num(r.relative)]);
    }
    Ok(Outcome {
        passed: decreasing,
        exact: vec!["rows.radius", "rows.l_max", "rows.residual", "rows.relative", "strictly_decreasing"],
        warnings: Vec::new(),
        results: json!({ "k": cfg.k, "rows": rows, "strictly_decreasing": decreasing }),
        tables: vec![table],
    })
}

fn schedule_sweep(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let mut table =
        Table::new("sweep", &["n", "ratio", "deviation", "std_error", "bound", "constant", "in_plus"]);
    let mut rows = Vec::new();
    let mut passed = true;
    let mut warnings = Vec::new();
    if !cfg.schedule_rp_valid {
        warnings.push("schedule is not RP-valid: 𝔐ₙRₙᴰ/Λₙ does not tend to zero".to_string());
    }
    for &n in &cfg.sweep.n_values {
        let radius = cfg.schedule.radius_at(n);
        let l_max = cfg.l_max.max((cfg.sweep.l_per_radius * radius).ceil() as usize);
        let ratio = spherefield::regularization::ratio(&cfg.schedule, n);
        let delta = cfg.schedule.delta_at(n);
        let f = pulled(cfg, radius, l_max)?.remove(0);
        if !f.in_plus_region(delta) || cfg.schedule.collar_at(n) >= radius {
            table.push(vec![n.to_string(), num(ratio), String::new(), String::new(), String::new(), String::new(), "false".into()]);
            rows.push(json!({ "n": n, "ratio": ratio, "in_plus": false }));
            continue;
        }
        let m = model(cfg, n, l_max, lagrangian(cfg, n))?;
        let sampler = m.sampler(cfg.k, cfg.seed.wrapping_add(n as u64))?;
        let r = rp_deviation(&f, &m, &sampler, cfg.samples)?;
        passed &= r.passes;
        table.push(vec![
            n.to_string(),
            num(r.ratio),
            num(r.deviation),
            num(r.std_error),
            num(r.bound),
            num(r.constant),
            "true".into(),
        ]);
        rows.push(json!({ "in_plus": true, "l_max": l_max, "report": r }));
    }
    Ok(Outcome {
        passed,
        exact: vec!["rows.n", "rows.ratio", "rows.report.bound", "rows.report.constant", "rows.in_plus"],
        warnings,
        results: json!({ "rows": rows }),
        tables: vec![table],
    })
}

/// Runs `command` on a validated configuration.
pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<Outcome, RunError> {
    match command {
        Command::Sample => sample(cfg),
        Command::Estimate => estimate_cmd(cfg),
        Command::RpTest => rp_test(cfg),
        Command::MarkovTest => markov_test(cfg),
        Command::InvarianceTest => invariance_test(cfg),
        Command::TranslationTest => translation_test(cfg),
        Command::ScheduleSweep => schedule_sweep(cfg),
    }
}

/// Writes `report.json`, one CSV per table and `timing.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    command: Command,
    cfg: &RunConfig,
    outcome: &Outcome,
    seconds: f64,
) -> Result<(), RunError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let report = RunReport {
        version: VERSION,
        command: command.name(),
        seed: cfg.seed,
        passed: outcome.passed,
        config: cfg,
        warnings: &outcome.warnings,
        exact: &outcome.exact,
        results: &outcome.results,
    };
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(io(&path))?;
    for t in &outcome.tables {
        let path = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.headers)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io(&path))?;
    }
    let path = dir.join("timing.json");
    let timing = json!({ "command": command.name(), "wall_clock_seconds": seconds });
    fs::write(&path, serde_json::to_string_pretty(&timing)? + "\n").map_err(io(&path))?;
    Ok(())
}

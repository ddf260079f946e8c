//! TOML run configuration with full defaulting and collected validation errors.

use std::fmt;

use serde::Serialize;
use spherefield::estimator::{CylindricalFunctional, FunctionalKind, TestFunction};
use spherefield::interaction::{
    phi4_evaluator, ClampedSquare, ConstantLagrangian, Lagrangian, Phi4Family, ZeroLagrangian,
};
use spherefield::regularization::{
    CutoffSchedule, MollifierProfile, MollifierSpec, PowerLaw, DEFAULT_ALPHA,
};
use spherefield::symmetry::{DEFAULT_FAMILY_AMPLITUDE, DEFAULT_L_PER_RADIUS};
use thiserror::Error;
use toml::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ConfigIssue {
    Syntax { message: String },
    MissingField { field: String },
    OutOfRange { field: String, message: String },
    WrongType { field: String, expected: String },
    UnknownKey { key: String, suggestion: Option<String> },
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigIssue::Syntax { message } => write!(f, "syntax error: {message}"),
            ConfigIssue::MissingField { field } => write!(f, "missing field `{field}`"),
            ConfigIssue::OutOfRange { field, message } => write!(f, "`{field}` out of range: {message}"),
            ConfigIssue::WrongType { field, expected } => write!(f, "`{field}` must be {expected}"),
            ConfigIssue::UnknownKey { key, suggestion: Some(s) } => {
                write!(f, "unknown key `{key}` (did you mean `{s}`?)")
            }
            ConfigIssue::UnknownKey { key, suggestion: None } => write!(f, "unknown key `{key}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} configuration error(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigError(pub Vec<ConfigIssue>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LagrangianConfig {
    Zero,
    Constant { value: f64 },
    ClampedSquare { coupling: PowerLaw, scale: PowerLaw },
    Phi4(Phi4Family),
}

impl LagrangianConfig {
    /// The evaluator at schedule index `n` for `laplacian_powers` Laplacian powers.
    pub fn at(&self, n: u32, laplacian_powers: u32) -> std::sync::Arc<dyn Lagrangian> {
        let arity = laplacian_powers as usize + 1;
        match *self {
            LagrangianConfig::Zero => std::sync::Arc::new(ZeroLagrangian { arity }),
            LagrangianConfig::Constant { value } => std::sync::Arc::new(ConstantLagrangian { value, arity }),
            LagrangianConfig::ClampedSquare { coupling, scale } => std::sync::Arc::new(ClampedSquare {
                scale: scale.eval(n),
                coupling: coupling.eval(n),
                arity,
            }),
            LagrangianConfig::Phi4(family) => std::sync::Arc::new(phi4_evaluator(&family, n)),
        }
    }

    fn fixed_arity(&self) -> Option<usize> {
        match self {
            LagrangianConfig::Phi4(_) => Some(2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalConfig {
    pub kind: FunctionalKind,
    pub bumps: Vec<TestFunction>,
}

impl FunctionalConfig {
    pub fn build(&self) -> CylindricalFunctional {
        CylindricalFunctional::new(self.bumps.clone(), self.kind).expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationConfig {
    pub t: Vec<f64>,
    pub radii: Vec<f64>,
    pub l_per_radius: f64,
    pub bump: TestFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub n_values: Vec<u32>,
    /// Band limit at index `n` is `max(l_max, ⌈l_per_radius · R_n⌉)`.
    pub l_per_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceConfig {
    pub crn: bool,
}

/// The effective configuration of a run, with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dim: usize,
    pub l_max: usize,
    pub k: i32,
    pub n: u32,
    pub samples: usize,
    pub seed: u64,
    pub laplacian_powers: u32,
    pub decomposition_order: i32,
    pub family_size: usize,
    pub schedule: CutoffSchedule,
    pub schedule_rp_valid: bool,
    pub mollifier: MollifierSpec,
    pub lagrangian: LagrangianConfig,
    pub functionals: Vec<FunctionalConfig>,
    pub translation: TranslationConfig,
    pub sweep: SweepConfig,
    pub invariance: InvarianceConfig,
    pub output: String,
}

impl RunConfig {
    /// Configured functionals, or the default bump family when none were given.
    pub fn functionals_or_family(&self) -> Vec<CylindricalFunctional> {
        if self.functionals.is_empty() {
            spherefield::symmetry::default_rp_family(self.dim, self.family_size, DEFAULT_FAMILY_AMPLITUDE)
                .expect("valid family")
        } else {
            self.functionals.iter().map(|f| f.build()).collect()
        }
    }
}

/// Reads a table while recording which keys were consumed and every problem found.
struct Reader<'a> {
    table: Option<&'a toml::Table>,
    path: String,
    used: Vec<&'static str>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl<'a> Reader<'a> {
    fn new(table: Option<&'a toml::Table>, path: impl Into<String>) -> Self {
        Self { table, path: path.into(), used: Vec::new() }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.push(key);
        self.table.and_then(|t| t.get(key))
    }

    fn field(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn wrong(&self, errs: &mut Vec<ConfigIssue>, key: &str, expected: &str) {
        errs.push(ConfigIssue::WrongType { field: self.field(key), expected: expected.into() });
    }

    fn float(&mut self, key: &'static str, default: f64, errs: &mut Vec<ConfigIssue>) -> f64 {
        match self.raw(key) {
            None => default,
            Some(Value::Float(v)) => *v,
            Some(Value::Integer(v)) => *v as f64,
            Some(_) => {
                self.wrong(errs, key, "a number");
                default
            }
        }
    }

    fn int(&mut self, key: &'static str, errs: &mut Vec<ConfigIssue>) -> Option<i64> {
        match self.raw(key) {
            None => None,
            Some(Value::Integer(v)) => Some(*v),
            Some(_) => {
                self.wrong(errs, key, "an integer");
                None
            }
        }
    }

    fn boolean(&mut self, key: &'static str, default: bool, errs: &mut Vec<ConfigIssue>) -> bool {
        match self.raw(key) {
            None => default,
            Some(Value::Boolean(v)) => *v,
            Some(_) => {
                self.wrong(errs, key, "a boolean");
                default
            }
        }
    }

    fn string(&mut self, key: &'static str, errs: &mut Vec<ConfigIssue>) -> Option<&'a str> {
        match self.raw(key) {
            None => None,
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => {
                self.wrong(errs, key, "a string");
                None
            }
        }
    }

    fn floats(&mut self, key: &'static str, errs: &mut Vec<ConfigIssue>) -> Option<Vec<f64>> {
        match self.raw(key) {
            None => None,
            Some(Value::Array(a)) => {
                let mut out = Vec::with_capacity(a.len());
                for v in a {
                    match v {
                        Value::Float(x) => out.push(*x),
                        Value::Integer(x) => out.push(*x as f64),
                        _ => {
                            self.wrong(errs, key, "an array of numbers");
                            return None;
                        }
                    }
                }
                Some(out)
            }
            Some(_) => {
                self.wrong(errs, key, "an array of numbers");
                None
            }
        }
    }

    fn table(&mut self, key: &'static str, errs: &mut Vec<ConfigIssue>) -> Option<&'a toml::Table> {
        match self.raw(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.wrong(errs, key, "a table");
                None
            }
        }
    }

    fn array(&mut self, key: &'static str, errs: &mut Vec<ConfigIssue>) -> Option<&'a Vec<Value>> {
        match self.raw(key) {
            None => None,
            Some(Value::Array(a)) => Some(a),
            Some(_) => {
                self.wrong(errs, key, "an array of tables");
                None
            }
        }
    }

    fn power_law(&mut self, key: &'static str, default: PowerLaw, errs: &mut Vec<ConfigIssue>) -> PowerLaw {
        let Some(t) = self.table(key, errs) else { return default };
        let mut r = Reader::new(Some(t), self.field(key));
        let out = PowerLaw::new(r.float("coeff", default.coeff, errs), r.float("power", default.power, errs));
        r.finish(errs);
        out
    }

    /// Reports every key that was never read.
    fn finish(self, errs: &mut Vec<ConfigIssue>) {
        let Some(t) = self.table else { return };
        for key in t.keys() {
            if !self.used.contains(&key.as_str()) {
                let suggestion = self
                    .used
                    .iter()
                    .map(|k| (strsim::jaro_winkler(key, k), *k))
                    .filter(|(s, _)| *s >= 0.8)
                    .max_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, k)| join(&self.path, k));
                errs.push(ConfigIssue::UnknownKey { key: join(&self.path, key), suggestion });
            }
        }
    }
}

fn int_at_least(r: &mut Reader, key: &'static str, min: i64, default: i64, errs: &mut Vec<ConfigIssue>) -> i64 {
    match r.int(key, errs) {
        None => default,
        Some(v) if v >= min => v,
        Some(v) => {
            out_of_range(errs, r.field(key), format!("{v} is below the minimum {min}"));
            default
        }
    }
}

fn out_of_range(errs: &mut Vec<ConfigIssue>, field: impl Into<String>, message: impl Into<String>) {
    errs.push(ConfigIssue::OutOfRange { field: field.into(), message: message.into() });
}

fn parse_bump(t: &Value, path: String, dim: usize, errs: &mut Vec<ConfigIssue>) -> Option<TestFunction> {
    let Value::Table(t) = t else {
        errs.push(ConfigIssue::WrongType { field: path, expected: "a table".into() });
        return None;
    };
    let mut r = Reader::new(Some(t), path.clone());
    let center = r.floats("center", errs);
    let radius = match r.raw("radius") {
        None => {
            errs.push(ConfigIssue::MissingField { field: join(&path, "radius") });
            None
        }
        Some(Value::Float(v)) => Some(*v),
        Some(Value::Integer(v)) => Some(*v as f64),
        Some(_) => {
            r.wrong(errs, "radius", "a number");
            None
        }
    };
    let amplitude = r.float("amplitude", 1.0, errs);
    r.finish(errs);
    let center = match center {
        Some(c) => c,
        None => {
            if t.get("center").is_none() {
                errs.push(ConfigIssue::MissingField { field: join(&path, "center") });
            }
            return None;
        }
    };
    if center.len() != dim {
        out_of_range(errs, join(&path, "center"), format!("needs {dim} components, got {}", center.len()));
        return None;
    }
    let radius = radius?;
    match TestFunction::new(center, radius, amplitude) {
        Ok(f) => Some(f),
        Err(e) => {
            out_of_range(errs, path, e.to_string());
            None
        }
    }
}

fn parse_kind(r: &mut Reader, errs: &mut Vec<ConfigIssue>) -> Option<FunctionalKind> {
    let name = r.string("kind", errs);
    let param = |r: &mut Reader, key: &'static str, errs: &mut Vec<ConfigIssue>| {
        let v = r.float(key, 1.0, errs);
        if !(v > 0.0 && v.is_finite()) {
            out_of_range(errs, r.field(key), "must be positive");
        }
        v
    };
    match name {
        None => {
            if r.table.is_some_and(|t| t.get("kind").is_none()) {
                errs.push(ConfigIssue::MissingField { field: r.field("kind") });
            }
            None
        }
        Some("constant") => Some(FunctionalKind::Constant { value: r.float("value", 1.0, errs) }),
        Some("cos") => Some(FunctionalKind::Cos),
        Some("clamped_identity") => Some(FunctionalKind::ClampedIdentity { bound: param(r, "bound", errs) }),
        Some("tanh") => Some(FunctionalKind::Tanh { scale: param(r, "scale", errs) }),
        Some("tanh_product") => Some(FunctionalKind::TanhProduct { scale: param(r, "scale", errs) }),
        Some(other) => {
            out_of_range(
                errs,
                r.field("kind"),
                format!("`{other}` is not one of constant, cos, clamped_identity, tanh, tanh_product"),
            );
            None
        }
    }
}

/// Parses and validates a configuration; every problem is reported, not just the first.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: toml::Table = toml::from_str(text)
        .map_err(|e| ConfigError(vec![ConfigIssue::Syntax { message: e.message().to_string() }]))?;
    let mut errs = Vec::new();
    let mut r = Reader::new(Some(&root), "");

    let dim = match r.int("dim", &mut errs) {
        None if root.get("dim").is_none() => {
            errs.push(ConfigIssue::MissingField { field: "dim".into() });
            1
        }
        None => 1,
        Some(d) if d == 1 || d == 2 => d as usize,
        Some(d) => {
            out_of_range(&mut errs, "dim", format!("{d} is not 1 or 2"));
            1
        }
    };
    let l_max = int_at_least(&mut r, "l_max", 4, 32, &mut errs) as usize;
    let k = int_at_least(&mut r, "k", 0, dim.div_ceil(2) as i64 + 1, &mut errs) as i32;
    let n = int_at_least(&mut r, "n", 1, 8, &mut errs) as u32;
    let samples = int_at_least(&mut r, "samples", 2, 10_000, &mut errs) as usize;
    let seed = int_at_least(&mut r, "seed", 0, 0, &mut errs) as u64;
    let laplacian_powers = int_at_least(&mut r, "laplacian_powers", 0, 1, &mut errs) as u32;
    let decomposition_order = int_at_least(&mut r, "decomposition_order", -1, -1, &mut errs) as i32;
    let family_size = int_at_least(&mut r, "family_size", 1, 3, &mut errs) as usize;
    if laplacian_powers > 4 {
        out_of_range(&mut errs, "laplacian_powers", "at most 4");
    }
    let output = r.string("output", &mut errs).unwrap_or("out").to_string();

    let default_schedule = CutoffSchedule::default_for(dim);
    let st = r.table("schedule", &mut errs);
    let mut sr = Reader::new(st, "schedule");
    let schedule = CutoffSchedule {
        dim,
        radius: sr.power_law("radius", default_schedule.radius, &mut errs),
        lambda: sr.power_law("lambda", default_schedule.lambda, &mut errs),
        sup_bound: sr.power_law("sup_bound", default_schedule.sup_bound, &mut errs),
        alpha: sr.float("alpha", DEFAULT_ALPHA, &mut errs),
    };
    sr.finish(&mut errs);
    if let Err(e) = schedule.validate() {
        out_of_range(&mut errs, "schedule", e.to_string());
    }

    let mt = r.table("mollifier", &mut errs);
    let mut mr = Reader::new(mt, "mollifier");
    match mr.string("profile", &mut errs) {
        None | Some("standard_bump") => {}
        Some(other) => out_of_range(&mut errs, "mollifier.profile", format!("unknown profile `{other}`")),
    }
    let support = mr.float("support_radius", 1.0, &mut errs);
    mr.finish(&mut errs);
    let mollifier = MollifierSpec::new(MollifierProfile::StandardBump, support).unwrap_or_else(|e| {
        out_of_range(&mut errs, "mollifier.support_radius", e.to_string());
        MollifierSpec::default()
    });

    let lt = r.table("lagrangian", &mut errs);
    let mut lr = Reader::new(lt, "lagrangian");
    let lagrangian = match lr.string("family", &mut errs).unwrap_or("phi4") {
        "zero" => LagrangianConfig::Zero,
        "constant" => LagrangianConfig::Constant { value: lr.float("value", 0.0, &mut errs) },
        "clamped_square" => LagrangianConfig::ClampedSquare {
            coupling: lr.power_law("coupling", PowerLaw::new(0.05, 0.0), &mut errs),
            scale: lr.power_law("scale", PowerLaw::new(1.0, 0.25), &mut errs),
        },
        "phi4" => {
            let d = Phi4Family::bounded_default();
            LagrangianConfig::Phi4(Phi4Family {
                a: lr.power_law("a", d.a, &mut errs),
                b: lr.power_law("b", d.b, &mut errs),
                c: lr.power_law("c", d.c, &mut errs),
                scale: lr.power_law("scale", d.scale, &mut errs),
            })
        }
        other => {
            out_of_range(
                &mut errs,
                "lagrangian.family",
                format!("`{other}` is not one of zero, constant, clamped_square, phi4"),
            );
            LagrangianConfig::Zero
        }
    };
    lr.finish(&mut errs);
    if let Some(a) = lagrangian.fixed_arity() {
        if a != laplacian_powers as usize + 1 {
            out_of_range(
                &mut errs,
                "laplacian_powers",
                format!("the Lagrangian family takes {a} arguments, so laplacian_powers must be {}", a - 1),
            );
        }
    }
    if let LagrangianConfig::Phi4(f) = lagrangian {
        if !(f.scale.coeff > 0.0) {
            out_of_range(&mut errs, "lagrangian.scale", "clamp scale must be positive");
        }
    }
    if let LagrangianConfig::ClampedSquare { scale, .. } = lagrangian {
        if !(scale.coeff > 0.0) {
            out_of_range(&mut errs, "lagrangian.scale", "clamp scale must be positive");
        }
    }

    let mut functionals = Vec::new();
    if let Some(items) = r.array("functional", &mut errs) {
        for (i, item) in items.iter().enumerate() {
            let path = format!("functional[{i}]");
            let Value::Table(t) = item else {
                errs.push(ConfigIssue::WrongType { field: path, expected: "a table".into() });
                continue;
            };
            let mut fr = Reader::new(Some(t), path.clone());
            let kind = parse_kind(&mut fr, &mut errs);
            let mut bumps = Vec::new();
            if let Some(list) = fr.array("bumps", &mut errs) {
                for (j, b) in list.iter().enumerate() {
                    if let Some(f) = parse_bump(b, format!("{path}.bumps[{j}]"), dim, &mut errs) {
                        bumps.push(f);
                    }
                }
            }
            fr.finish(&mut errs);
            if let Some(kind) = kind {
                match CylindricalFunctional::new(bumps.clone(), kind) {
                    Ok(_) => functionals.push(FunctionalConfig { kind, bumps }),
                    Err(e) => out_of_range(&mut errs, path, e.to_string()),
                }
            }
        }
    }

    let tt = r.table("translation", &mut errs);
    let mut tr = Reader::new(tt, "translation");
    let mut t = tr.floats("t", &mut errs).unwrap_or_else(|| {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        v
    });
    if t.len() != dim || t.iter().any(|v| !v.is_finite()) {
        out_of_range(&mut errs, "translation.t", format!("needs {dim} finite components"));
        t = vec![0.0; dim];
    }
    let radii = tr.floats("radii", &mut errs).unwrap_or_else(|| vec![10.0, 20.0, 40.0, 80.0]);
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        out_of_range(&mut errs, "translation.radii", "needs at least one positive radius");
    }
    let l_per_radius = tr.float("l_per_radius", DEFAULT_L_PER_RADIUS, &mut errs);
    if !(l_per_radius > 0.0 && l_per_radius.is_finite()) {
        out_of_range(&mut errs, "translation.l_per_radius", "must be positive");
    }
    let bump = match tr.raw("bump") {
        None => TestFunction::new(vec![0.0; dim], 1.0, 1.0).expect("valid"),
        Some(v) => parse_bump(v, "translation.bump".into(), dim, &mut errs)
            .unwrap_or_else(|| TestFunction::new(vec![0.0; dim], 1.0, 1.0).expect("valid")),
    };
    tr.finish(&mut errs);
    let translation = TranslationConfig { t, radii, l_per_radius, bump };

    let wt = r.table("sweep", &mut errs);
    let mut wr = Reader::new(wt, "sweep");
    let n_values: Vec<u32> = match wr.raw("n_values") {
        None => (1..=16).collect(),
        Some(Value::Array(a)) => {
            let mut out = Vec::new();
            for v in a {
                match v.as_integer() {
                    Some(x) if x >= 1 && x <= u32::MAX as i64 => out.push(x as u32),
                    _ => {
                        out_of_range(&mut errs, "sweep.n_values", "entries must be integers ≥ 1");
                        break;
                    }
                }
            }
            if out.is_empty() {
                out_of_range(&mut errs, "sweep.n_values", "needs at least one entry");
            }
            out
        }
        Some(_) => {
            wr.wrong(&mut errs, "n_values", "an array of integers");
            Vec::new()
        }
    };
    let sweep_l = wr.float("l_per_radius", 8.0, &mut errs);
    if !(sweep_l > 0.0 && sweep_l.is_finite()) {
        out_of_range(&mut errs, "sweep.l_per_radius", "must be positive");
    }
    wr.finish(&mut errs);

    let it = r.table("invariance", &mut errs);
    let mut ir = Reader::new(it, "invariance");
    let crn = ir.boolean("crn", true, &mut errs);
    ir.finish(&mut errs);

    r.finish(&mut errs);
    if !errs.is_empty() {
        return Err(ConfigError(errs));
    }
    Ok(RunConfig {
        dim,
        l_max,
        k,
        n,
        samples,
        seed,
        laplacian_powers,
        decomposition_order,
        family_size,
        schedule_rp_valid: schedule.is_rp_valid(),
        schedule,
        mollifier,
        lagrangian,
        functionals,
        translation,
        sweep: SweepConfig { n_values, l_per_radius: sweep_l },
        invariance: InvarianceConfig { crn },
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        parse_config(text).unwrap_err().0
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config("dim = 1").unwrap();
        assert_eq!(c.dim, 1);
        assert_eq!(c.k, 2);
        assert_eq!(c.decomposition_order, -1);
        assert_eq!(c.schedule, CutoffSchedule::default_for(1));
        assert!(c.schedule_rp_valid);
        assert_eq!(c.lagrangian, LagrangianConfig::Phi4(Phi4Family::bounded_default()));
        assert_eq!(parse_config("dim = 2").unwrap().k, 2);
    }

    #[test]
    fn samples_one_is_out_of_range() {
        let e = issues("dim = 1\nsamples = 1");
        assert!(matches!(&e[..], [ConfigIssue::OutOfRange { field, .. }] if field == "samples"));
    }

    #[test]
    fn misspelled_key_gets_a_suggestion() {
        let e = issues("dim = 1\n[schedule]\nlambda_n = { coeff = 1.0, power = 3.0 }");
        assert_eq!(
            e,
            vec![ConfigIssue::UnknownKey { key: "schedule.lambda_n".into(), suggestion: Some("schedule.lambda".into()) }]
        );
    }

    #[test]
    fn errors_are_collected() {
        let e = issues("samples = 0\nl_max = 2\nwat = 3");
        assert_eq!(e.len(), 4, "{e:?}");
        assert!(e.contains(&ConfigIssue::MissingField { field: "dim".into() }));
    }

    #[test]
    fn functionals_parse() {
        let c = parse_config(
            "dim = 2\n[[functional]]\nkind = \"tanh\"\nscale = 0.5\n[[functional.bumps]]\ncenter = [0.0, 1.5]\nradius = 0.5",
        )
        .unwrap();
        assert_eq!(c.functionals.len(), 1);
        assert_eq!(c.functionals[0].kind, FunctionalKind::Tanh { scale: 0.5 });
        let e = issues("dim = 2\n[[functional]]\nkind = \"tanh\"\n[[functional.bumps]]\ncenter = [0.0]\nradius = 0.5");
        assert!(matches!(&e[0], ConfigIssue::OutOfRange { field, .. } if field == "functional[0].bumps[0].center"));
    }

    #[test]
    fn phi4_needs_one_laplacian_power() {
        let e = issues("dim = 1\nlaplacian_powers = 2");
        assert!(matches!(&e[..], [ConfigIssue::OutOfRange { field, .. }] if field == "laplacian_powers"));
        assert!(parse_config("dim = 1\nlaplacian_powers = 2\n[lagrangian]\nfamily = \"zero\"").is_ok());
    }

    #[test]
    fn constant_ratio_schedule_is_flagged() {
        let c = parse_config("dim = 1\n[schedule]\nlambda = { coeff = 1.0, power = 2.0 }").unwrap();
        assert!(!c.schedule_rp_valid);
    }
}

//! Executes a validated [`ExperimentSpec`] and renders its artifacts.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::{
    ClassifyParams, CommandParams, ExperimentSpec, Format, ProfileParams, RateParams, RunParams,
    ShadowParams, TableParams, SCHEMA_VERSION,
};
use crate::diagnostics::{self, median};
use crate::error::{Error, Result};
use crate::gibbs::{self, RhoEvaluator};
use crate::output::{self, fmt_f64, Artifact, CsvWriter, Manifest, ManifestEntry};
use crate::sim::{self, TrajectoryRecord};

/// Slack on the one-sided rate band `slope <= -eta + slack`.
pub const RATE_BAND_SLACK: f64 = 0.15;

const LIMSUP_NOTE: &str = "finite-window regression slopes cannot certify a limsup; the band check is one-sided \
                           with slack and the raw slopes are reported alongside";

/// Everything a command produced, not yet on disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub manifest: Manifest,
}

impl Outcome {
    pub fn postconditions_ok(&self) -> bool {
        self.manifest.postconditions_ok
    }

    /// Primary output followed by sidecars, then the manifest.
    pub fn all_artifacts(&self) -> Vec<Artifact> {
        let mut all = self.artifacts.clone();
        all.push(self.manifest.to_artifact(output::with_suffix(&self.artifacts[0].path, ".manifest.json")));
        all
    }
}

fn default_out(spec: &ExperimentSpec) -> PathBuf {
    let ext = match spec.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    PathBuf::from(format!("{}.{ext}", spec.command().name()))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(value).expect("report serializes");
    b.push(b'\n');
    b
}

struct Rendered {
    primary: Vec<u8>,
    sidecars: Vec<(&'static str, Vec<u8>)>,
    ok: bool,
    notes: Vec<String>,
}

impl Rendered {
    fn ok(primary: Vec<u8>) -> Self {
        Self {
            primary,
            sidecars: Vec::new(),
            ok: true,
            notes: Vec::new(),
        }
    }
}

/// Runs the command described by `spec`.
pub fn run_command(spec: &ExperimentSpec) -> Result<Outcome> {
    let hash = output::config_hash(spec);
    let rendered = match &spec.params {
        CommandParams::LambdaTable(p) => lambda_table(p, spec.format, &hash)?,
        CommandParams::ProfileDump(p) => profile_dump(p, spec.format, &hash)?,
        CommandParams::Simulate(p) => simulate(p, spec, &hash)?,
        CommandParams::Ensemble(p) => ensemble(p, spec, &hash)?,
        CommandParams::Rate(p) => rate(p, spec, &hash)?,
        CommandParams::Shadow(p) => shadow(p, spec, &hash)?,
        CommandParams::Classify(p) => classify(p, spec.format, &hash)?,
    };
    let out = spec.out.as_ref().map(PathBuf::from).unwrap_or_else(|| default_out(spec));
    let mut artifacts = vec![Artifact {
        path: out.clone(),
        bytes: rendered.primary,
    }];
    for (suffix, bytes) in rendered.sidecars {
        artifacts.push(Artifact {
            path: output::with_suffix(&out, suffix),
            bytes,
        });
    }
    let outputs = artifacts
        .iter()
        .map(|a| ManifestEntry {
            path: display_path(&a.path),
            content_hash: output::content_hash(&a.bytes),
            bytes: a.bytes.len(),
        })
        .collect();
    let mut notes = spec.warnings.clone();
    notes.extend(rendered.notes);
    let manifest = Manifest {
        manifest_version: SCHEMA_VERSION,
        command: spec.command().name().to_string(),
        config_hash: hash,
        seed: spec.run_params().map(|r| r.sim.seed),
        spec: spec.clone(),
        outputs,
        postconditions_ok: rendered.ok,
        notes,
    };
    Ok(Outcome { artifacts, manifest })
}

fn display_path(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub n: usize,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "Lambda_times_n_plus_1")]
    pub lambda_times_n_plus_1: f64,
    pub argmax: f64,
}

/// Lambda, Lambda (n+1) and argmax lambda for each n.
pub fn lambda_table_rows(ns: &[usize]) -> Result<Vec<TableRow>> {
    use rayon::prelude::*;
    ns.par_iter()
        .map(|&n| {
            let l = gibbs::capital_lambda(n)?;
            Ok(TableRow {
                n,
                lambda: l.value,
                lambda_times_n_plus_1: l.value * (n + 1) as f64,
                argmax: l.r_star,
            })
        })
        .collect()
}

fn lambda_table(p: &TableParams, format: Format, hash: &str) -> Result<Rendered> {
    let rows = lambda_table_rows(&p.ns)?;
    let primary = match format {
        Format::Csv => {
            let header = ["n", "Lambda", "Lambda_times_n_plus_1", "argmax"].map(String::from);
            let mut csv = CsvWriter::new(hash, &header);
            for r in &rows {
                csv.row(&[
                    r.n.to_string(),
                    fmt_f64(r.lambda),
                    fmt_f64(r.lambda_times_n_plus_1),
                    fmt_f64(r.argmax),
                ]);
            }
            csv.into_bytes()
        }
        Format::Json => json_bytes(&json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": hash,
            "rows": rows,
        })),
    };
    Ok(Rendered::ok(primary))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub n: usize,
    pub r: f64,
    pub rho: f64,
    pub lambda: f64,
}

/// rho and lambda on `r = 0, r_step, ..., r_max` for each n.
pub fn profile_rows(p: &ProfileParams) -> Result<Vec<ProfileRow>> {
    let steps = (p.r_max / p.r_step + 1e-9).floor() as usize;
    let mut rows = Vec::with_capacity(p.ns.len() * (steps + 1));
    for &n in &p.ns {
        let rho = gibbs::rho_ode(p.r_max, n)?;
        for i in 0..=steps {
            let r = (i as f64 * p.r_step).min(p.r_max);
            rows.push(ProfileRow {
                n,
                r,
                rho: rho.rho(r),
                lambda: gibbs::lambda_profile(r, &rho),
            });
        }
    }
    Ok(rows)
}

/// rho strictly increasing and lambda with exactly one interior maximum,
/// per n.
pub fn check_profile_shape(rows: &[ProfileRow]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    for n in ns {
        let sub: Vec<&ProfileRow> = rows.iter().filter(|r| r.n == n).collect();
        if sub.windows(2).any(|w| w[1].rho <= w[0].rho) {
            problems.push(format!("rho not strictly increasing for n = {n}"));
        }
        let lam: Vec<f64> = sub.iter().map(|r| r.lambda).collect();
        let peaks = gibbs::optimize::local_maxima(&lam);
        if peaks.len() != 1 {
            problems.push(format!("lambda has {} interior maxima for n = {n}", peaks.len()));
        }
    }
    problems
}

fn profile_dump(p: &ProfileParams, format: Format, hash: &str) -> Result<Rendered> {
    let rows = profile_rows(p)?;
    let problems = check_profile_shape(&rows);
    let primary = match format {
        Format::Csv => {
            let mut csv = CsvWriter::new(hash, &["n", "r", "rho", "lambda"].map(String::from));
            for r in &rows {
                csv.row(&[r.n.to_string(), fmt_f64(r.r), fmt_f64(r.rho), fmt_f64(r.lambda)]);
            }
            csv.into_bytes()
        }
        Format::Json => json_bytes(&json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": hash,
            "rows": rows,
        })),
    };
    Ok(Rendered {
        primary,
        sidecars: Vec::new(),
        ok: problems.is_empty(),
        notes: problems,
    })
}

/// Postconditions of a set of records: complete, and |m| <= 1 throughout.
fn record_problems(records: &[TrajectoryRecord]) -> Vec<String> {
    let mut problems = Vec::new();
    for r in records {
        if let Some(f) = &r.failure {
            problems.push(format!("seed {}: {f}", r.seed()));
        }
        if r
            .checkpoints
            .iter()
            .any(|c| crate::geometry::norm(&c.m) > 1.0 + 1e-9)
        {
            problems.push(format!("seed {}: |m| exceeded 1", r.seed()));
        }
    }
    problems
}

fn sidecar(spec: &ExperimentSpec, hash: &str, records: &[TrajectoryRecord]) -> Vec<u8> {
    let run = spec.run_params().expect("simulation command");
    json_bytes(&json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": hash,
        "config": run.sim,
        "seeds": records.iter().map(|r| r.seed()).collect::<Vec<_>>(),
        "test_labels": records.first().map(|r| r.test_labels.clone()).unwrap_or_default(),
        "failures": records.iter().filter_map(|r| r.failure.clone()).collect::<Vec<_>>(),
        "terminal": records.iter().map(|r| json!({
            "seed": r.seed(),
            "x": r.terminal_x,
            "t": r.terminal_state.t,
            "m": r.terminal_state.m,
        })).collect::<Vec<_>>(),
    }))
}

fn run_records(p: &RunParams, threads: Option<usize>) -> Result<Vec<TrajectoryRecord>> {
    if p.n_seeds == 1 {
        Ok(vec![sim::run_trajectory(&p.sim)?])
    } else {
        sim::run_ensemble(&p.sim, p.n_seeds, threads)
    }
}

fn render_records(records: &[TrajectoryRecord], spec: &ExperimentSpec, hash: &str, with_seed: bool) -> Rendered {
    let problems = record_problems(records);
    let primary = match spec.format {
        Format::Csv => {
            let mut csv = CsvWriter::new(hash, &output::trajectory_header(&records[0], with_seed));
            for r in records {
                output::trajectory_rows(r, with_seed, &mut csv);
            }
            csv.into_bytes()
        }
        Format::Json => json_bytes(&json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": hash,
            "records": records,
        })),
    };
    Rendered {
        primary,
        sidecars: vec![(".json", sidecar(spec, hash, records))],
        ok: problems.is_empty(),
        notes: problems,
    }
}

fn simulate(p: &RunParams, spec: &ExperimentSpec, hash: &str) -> Result<Rendered> {
    let rec = sim::run_trajectory(&p.sim)?;
    Ok(render_records(&[rec], spec, hash, false))
}

fn ensemble(p: &RunParams, spec: &ExperimentSpec, hash: &str) -> Result<Rendered> {
    let records = sim::run_ensemble(&p.sim, p.n_seeds, spec.threads)?;
    Ok(render_records(&records, spec, hash, true))
}

/// Theoretical exponent for a run, when the schedule admits one.
fn theory(p: &RunParams) -> Result<serde_json::Value> {
    let Some(c) = p.sim.schedule.constants() else {
        return Ok(json!({ "applicable": false, "reason": "linear schedule" }));
    };
    let lambda = gibbs::capital_lambda(p.sim.n)?;
    let rate = gibbs::rate_eta(c.a, c.gamma, c.beta0, p.sim.n, lambda.value, Some(p.kappa));
    let regime = match p.sim.schedule.kind {
        crate::schedule::ScheduleKind::Constant => Some(gibbs::classify_regime(p.sim.schedule.b, p.sim.n)),
        _ => None,
    };
    Ok(json!({ "applicable": true, "rate": rate, "regime": regime }))
}

fn rate(p: &RateParams, spec: &ExperimentSpec, hash: &str) -> Result<Rendered> {
    let records = run_records(&p.run, spec.threads)?;
    let mut problems = record_problems(&records);
    let estimates: Vec<_> = records
        .iter()
        .map(|r| diagnostics::estimate_rate(r, &p.observable, p.window).map(|e| (r.seed(), e)))
        .collect::<Result<_>>()?;
    let slopes: Vec<f64> = estimates.iter().map(|(_, e)| e.slope).collect();
    let median_slope = median(&slopes);
    let theory = theory(&p.run)?;
    let band = theory["rate"]["valid"].as_bool().filter(|v| *v).map(|_| {
        let eta = theory["rate"]["eta"].as_f64().unwrap_or(f64::NAN);
        let threshold = -eta + RATE_BAND_SLACK;
        json!({ "eta": eta, "threshold": threshold, "passed": median_slope <= threshold })
    });
    if let Some(b) = &band {
        if b["passed"] == json!(false) {
            problems.push(format!("median slope {median_slope} above band {}", b["threshold"]));
        }
    }
    let primary = match spec.format {
        Format::Csv => {
            let header = ["seed", "slope", "stderr", "intercept", "points_used", "points_dropped"].map(String::from);
            let mut csv = CsvWriter::new(hash, &header);
            for (seed, e) in &estimates {
                csv.row(&[
                    seed.to_string(),
                    fmt_f64(e.slope),
                    fmt_f64(e.stderr),
                    fmt_f64(e.intercept),
                    e.points_used.to_string(),
                    e.points_dropped.to_string(),
                ]);
            }
            csv.into_bytes()
        }
        Format::Json => json_bytes(&json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": hash,
            "observable": p.observable.label(),
            "window": p.window,
            "estimates": estimates.iter().map(|(s, e)| json!({ "seed": s, "estimate": e })).collect::<Vec<_>>(),
            "median_slope": median_slope,
            "theory": theory,
            "band_check": band,
            "note": LIMSUP_NOTE,
        })),
    };
    Ok(Rendered {
        primary,
        sidecars: Vec::new(),
        ok: problems.is_empty(),
        notes: problems,
    })
}

fn shadow(p: &ShadowParams, spec: &ExperimentSpec, hash: &str) -> Result<Rendered> {
    let records = run_records(&p.run, spec.threads)?;
    let problems = record_problems(&records);
    let reports: Vec<_> = records
        .iter()
        .map(|r| diagnostics::shadowing_residual(r, &p.observable, p.window).map(|s| (r.seed(), s)))
        .collect::<Result<_>>()?;
    let exponents: Vec<f64> = reports.iter().map(|(_, s)| s.decay_exponent).collect();
    let primary = match spec.format {
        Format::Csv => {
            let mut csv = CsvWriter::new(hash, &["seed", "tau", "residual"].map(String::from));
            for (seed, s) in &reports {
                for (t, r) in s.tau.iter().zip(&s.residual) {
                    csv.row(&[seed.to_string(), fmt_f64(*t), fmt_f64(*r)]);
                }
            }
            csv.into_bytes()
        }
        Format::Json => json_bytes(&json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": hash,
            "observable": p.observable.label(),
            "window": p.window,
            "reports": reports.iter().map(|(s, r)| json!({ "seed": s, "report": r })).collect::<Vec<_>>(),
            "median_decay_exponent": median(&exponents),
            "note": LIMSUP_NOTE,
        })),
    };
    Ok(Rendered {
        primary,
        sidecars: Vec::new(),
        ok: problems.is_empty(),
        notes: problems,
    })
}

fn classify(p: &ClassifyParams, format: Format, hash: &str) -> Result<Rendered> {
    let regime = gibbs::classify_regime(p.b, p.n);
    let lambda = gibbs::capital_lambda(p.n)?;
    let rate = gibbs::rate_eta(0.0, 1.0, (-p.b).max(0.0), p.n, lambda.value, Some(p.kappa));
    let primary = match format {
        Format::Csv => {
            let header = ["b", "n", "regime", "exponent", "Lambda", "eta", "eta_valid"].map(String::from);
            let mut csv = CsvWriter::new(hash, &header);
            csv.row(&[
                fmt_f64(p.b),
                p.n.to_string(),
                regime.name().to_string(),
                fmt_f64(regime.exponent()),
                fmt_f64(lambda.value),
                fmt_f64(rate.eta),
                rate.valid.to_string(),
            ]);
            csv.into_bytes()
        }
        Format::Json => json_bytes(&json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": hash,
            "b": p.b,
            "n": p.n,
            "regime": regime,
            "regime_name": regime.name(),
            "Lambda": lambda,
            "rate": rate,
        })),
    };
    Ok(Rendered::ok(primary))
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::UnknownTestFunction(_) => 2,
        Error::Io(_) => 3,
        Error::NonFinite { .. } => 4,
        Error::StepUnderflow { .. } | Error::BracketEdge { .. } | Error::Multimodal(_) => 5,
        Error::TooFewPoints { .. } | Error::GridTooCoarse { .. } => 6,
        Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } | Error::InvalidPoint(_) => 7,
    }
}

/// Exit code when a run completed but a postcondition failed.
pub const EXIT_POSTCONDITION: i32 = 8;

/// Lambda for a dimension through the same evaluator the table uses.
pub fn lambda_of(n: usize) -> Result<f64> {
    Ok(gibbs::capital_lambda(n)?.value)
}

/// Max |rho_ode - rho_quadrature| on `grid` for dimension n.
pub fn rho_path_gap(n: usize, grid: &[f64]) -> Result<f64> {
    let r_max = grid.iter().cloned().fold(0.0, f64::max).max(1e-3);
    let ode = gibbs::rho_ode(r_max, n)?;
    let quad = gibbs::QuadratureRho { n };
    Ok(grid
        .iter()
        .map(|&r| (ode.rho(r) - quad.rho(r)).abs())
        .fold(0.0, f64::max))
}

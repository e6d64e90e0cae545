//! Experiment configuration documents (JSON) and their validation.

use serde::{Deserialize, Serialize};

use crate::diagnostics::Observable;
use crate::error::{Error, Result};
use crate::gibbs;
use crate::schedule::{BetaSchedule, ScheduleKind};
use crate::sim::{default_checkpoint_ratio, SimConfig, StartSpec, StepMode, DEFAULT_H0, DEFAULT_T_INIT};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    LambdaTable,
    ProfileDump,
    Simulate,
    Ensemble,
    Rate,
    Shadow,
    Classify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::LambdaTable => "lambda-table",
            Command::ProfileDump => "profile-dump",
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Rate => "rate",
            Command::Shadow => "shadow",
            Command::Classify => "classify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// The document as written by the user. Every key is optional here;
/// [`parse_config`] resolves defaults and checks preconditions.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<Command>,
    n: Option<usize>,
    ns: Option<Vec<usize>>,
    schedule: Option<BetaSchedule>,
    #[serde(rename = "T", alias = "horizon")]
    horizon: Option<f64>,
    seed: Option<u64>,
    h0: Option<f64>,
    t_init: Option<f64>,
    step_mode: Option<StepMode>,
    checkpoint_ratio: Option<f64>,
    start: Option<StartSpec>,
    n_seeds: Option<usize>,
    threads: Option<usize>,
    kappa: Option<f64>,
    r_max: Option<f64>,
    r_step: Option<f64>,
    b: Option<f64>,
    observable: Option<String>,
    window: Option<(f64, f64)>,
    #[serde(rename = "T_window")]
    shadow_window: Option<f64>,
    out: Option<String>,
    format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableParams {
    pub ns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub ns: Vec<usize>,
    pub r_max: f64,
    pub r_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub sim: SimConfig,
    pub n_seeds: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub run: RunParams,
    pub observable: Observable,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowParams {
    pub run: RunParams,
    pub observable: Observable,
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub b: f64,
    pub n: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "parameters", rename_all = "kebab-case")]
pub enum CommandParams {
    LambdaTable(TableParams),
    ProfileDump(ProfileParams),
    Simulate(RunParams),
    Ensemble(RunParams),
    Rate(RateParams),
    Shadow(ShadowParams),
    Classify(ClassifyParams),
}

/// A fully resolved experiment: every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    #[serde(flatten)]
    pub params: CommandParams,
    pub out: Option<String>,
    pub format: Format,
    pub threads: Option<usize>,
    /// Non-fatal findings, e.g. a schedule outside the rate theorem.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExperimentSpec {
    pub fn command(&self) -> Command {
        match &self.params {
            CommandParams::LambdaTable(_) => Command::LambdaTable,
            CommandParams::ProfileDump(_) => Command::ProfileDump,
            CommandParams::Simulate(_) => Command::Simulate,
            CommandParams::Ensemble(_) => Command::Ensemble,
            CommandParams::Rate(_) => Command::Rate,
            CommandParams::Shadow(_) => Command::Shadow,
            CommandParams::Classify(_) => Command::Classify,
        }
    }

    /// The simulation settings, for commands that run trajectories.
    pub fn run_params(&self) -> Option<&RunParams> {
        match &self.params {
            CommandParams::Simulate(r) | CommandParams::Ensemble(r) => Some(r),
            CommandParams::Rate(p) => Some(&p.run),
            CommandParams::Shadow(p) => Some(&p.run),
            _ => None,
        }
    }

    pub fn run_params_mut(&mut self) -> Option<&mut RunParams> {
        match &mut self.params {
            CommandParams::Simulate(r) | CommandParams::Ensemble(r) => Some(r),
            CommandParams::Rate(p) => Some(&mut p.run),
            CommandParams::Shadow(p) => Some(&mut p.run),
            _ => None,
        }
    }

    /// Canonical JSON echo of the resolved spec.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

pub fn default_table_ns() -> Vec<usize> {
    let mut ns: Vec<usize> = (1..=10).collect();
    ns.extend([20, 50, 100]);
    ns
}

fn require<T>(value: Option<T>, key: &str, command: Command) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("`{}` requires key `{key}`", command.name())))
}

fn check_ns(ns: &[usize]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::Config("`ns` must not be empty".into()));
    }
    if let Some(bad) = ns.iter().find(|&&n| n < 1) {
        return Err(Error::Config(format!("n = {bad} violates the precondition n >= 1")));
    }
    Ok(())
}

fn check_kappa(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Config(format!("kappa = {kappa} must be positive")));
    }
    Ok(kappa)
}

/// Parses and validates a JSON configuration document.
///
/// `command` overrides (or supplies) the document's `command` key.
pub fn parse_config(text: &str, command: Option<Command>) -> Result<ExperimentSpec> {
    let raw: RawConfig = if text.trim().is_empty() {
        RawConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
    };
    let command = command
        .or(raw.command)
        .ok_or_else(|| Error::Config("no command given (key `command` or CLI subcommand)".into()))?;
    let mut warnings = Vec::new();

    let params = match command {
        Command::LambdaTable => {
            let ns = raw.ns.clone().unwrap_or_else(default_table_ns);
            check_ns(&ns)?;
            CommandParams::LambdaTable(TableParams { ns })
        }
        Command::ProfileDump => {
            let ns = raw.ns.clone().unwrap_or_else(|| vec![1, 2, 3, 4]);
            check_ns(&ns)?;
            let r_max = raw.r_max.unwrap_or(10.0);
            let r_step = raw.r_step.unwrap_or(0.01);
            if !(r_max > 0.0 && r_max.is_finite()) {
                return Err(Error::Config(format!("r_max = {r_max} violates the precondition r_max > 0")));
            }
            if !(r_step > 0.0 && r_step <= r_max) {
                return Err(Error::Config(format!("r_step = {r_step} must lie in (0, r_max]")));
            }
            CommandParams::ProfileDump(ProfileParams { ns, r_max, r_step })
        }
        Command::Classify => {
            let b = require(raw.b.or(raw.schedule.map(|s| s.b)), "b", command)?;
            if let Some(s) = raw.schedule {
                if s.kind != ScheduleKind::Constant {
                    return Err(Error::Config("`classify` applies to constant schedules only".into()));
                }
            }
            let n = require(raw.n, "n", command)?;
            check_ns(&[n])?;
            if !b.is_finite() {
                return Err(Error::Config(format!("b = {b} must be finite")));
            }
            let kappa = check_kappa(raw.kappa.unwrap_or_else(|| gibbs::default_kappa(n)))?;
            warnings.extend(schedule_warnings(&BetaSchedule::constant(b), n));
            CommandParams::Classify(ClassifyParams { b, n, kappa })
        }
        Command::Simulate | Command::Ensemble | Command::Rate | Command::Shadow => {
            let run = run_params(&raw, command, &mut warnings)?;
            match command {
                Command::Simulate => {
                    if raw.n_seeds.is_some_and(|k| k != 1) {
                        return Err(Error::Config("`simulate` runs one trajectory; use `ensemble`".into()));
                    }
                    CommandParams::Simulate(run)
                }
                Command::Ensemble => CommandParams::Ensemble(run),
                Command::Rate => {
                    let observable = Observable::parse(raw.observable.as_deref().unwrap_or("x0"))?;
                    let window = raw.window.unwrap_or((run.sim.t_init * 10.0, run.sim.horizon));
                    if !(window.0 < window.1 && window.0 >= run.sim.t_init && window.1 <= run.sim.horizon) {
                        return Err(Error::Config(format!(
                            "window {window:?} must satisfy t_init <= lo < hi <= T"
                        )));
                    }
                    CommandParams::Rate(RateParams { run, observable, window })
                }
                _ => {
                    let observable = Observable::parse(raw.observable.as_deref().unwrap_or("x0"))?;
                    let window = raw.shadow_window.unwrap_or(1.0);
                    if !(window > 0.0 && window.is_finite()) {
                        return Err(Error::Config(format!("T_window = {window} must be positive")));
                    }
                    if run.sim.checkpoint_ratio > crate::diagnostics::max_shadowing_ratio() {
                        return Err(Error::Config(format!(
                            "checkpoint_ratio {} too coarse for shadowing (max 10^(1/8))",
                            run.sim.checkpoint_ratio
                        )));
                    }
                    CommandParams::Shadow(ShadowParams { run, observable, window })
                }
            }
        }
    };

    if raw.threads == Some(0) {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    Ok(ExperimentSpec {
        schema_version: SCHEMA_VERSION,
        params,
        out: raw.out,
        format: raw.format.unwrap_or_default(),
        threads: raw.threads,
        warnings,
    })
}

fn run_params(raw: &RawConfig, command: Command, warnings: &mut Vec<String>) -> Result<RunParams> {
    let n = require(raw.n, "n", command)?;
    let schedule = require(raw.schedule, "schedule", command)?;
    let horizon = require(raw.horizon, "T", command)?;
    let sim = SimConfig {
        n,
        schedule,
        h0: raw.h0.unwrap_or(DEFAULT_H0),
        horizon,
        t_init: raw.t_init.unwrap_or(DEFAULT_T_INIT),
        step_mode: raw.step_mode.unwrap_or_default(),
        seed: raw.seed.unwrap_or(0),
        checkpoint_ratio: raw.checkpoint_ratio.unwrap_or_else(default_checkpoint_ratio),
        start: raw.start.clone().unwrap_or_default(),
    };
    sim.validate()?;
    let n_seeds = raw.n_seeds.unwrap_or(1);
    if n_seeds < 1 {
        return Err(Error::Config("n_seeds = 0 violates the precondition n_seeds >= 1".into()));
    }
    let kappa = check_kappa(raw.kappa.unwrap_or_else(|| gibbs::default_kappa(n)))?;
    warnings.extend(schedule_warnings(&schedule, n));
    Ok(RunParams { sim, n_seeds, kappa })
}

/// Findings that do not block a run but put it outside the rate theorem.
pub fn schedule_warnings(schedule: &BetaSchedule, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    let Some(c) = schedule.constants() else {
        out.push("linear schedule: strong interaction, no rate theory applies (unclassified)".into());
        return out;
    };
    match gibbs::capital_lambda(n) {
        Ok(l) if c.beta0 * l.value >= 1.0 => out.push(format!(
            "beta(t) >= -beta0 with beta0 = {} >= 1/Lambda(n={n}) = {:.6}: lower-bound hypothesis \
             beta >= -beta0 > -1/Lambda fails, rate theorem does not apply",
            c.beta0,
            1.0 / l.value
        )),
        Ok(_) => {}
        Err(e) => out.push(format!("could not compute Lambda(n={n}): {e}")),
    }
    if schedule.kind != ScheduleKind::Constant && c.gamma <= 2.0 * c.a * gibbs::default_kappa(n) {
        out.push(format!(
            "gamma = {} <= 2 a kappa = {:.6}: growth too fast for the rate theorem",
            c.gamma,
            2.0 * c.a * gibbs::default_kappa(n)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_simulate_resolves_defaults() {
        let spec = parse_config(
            r#"{"n": 1, "schedule": {"kind": "constant", "b": 0}, "T": 100, "seed": 42}"#,
            Some(Command::Simulate),
        )
        .unwrap();
        let run = spec.run_params().unwrap();
        assert_eq!(run.sim.h0, 1e-2);
        assert_eq!(run.sim.t_init, 1.0);
        assert_eq!(run.sim.checkpoint_ratio, 10f64.powf(0.125));
        assert_eq!(run.kappa, 8.0);
        assert_eq!(run.sim.seed, 42);
        assert!(spec.warnings.is_empty());
        let echo = spec.to_json();
        for key in ["\"h0\"", "\"t_init\"", "\"checkpoint_ratio\"", "\"kappa\"", "\"schema_version\""] {
            assert!(echo.contains(key), "{key} missing from {echo}");
        }
        let again: ExperimentSpec = serde_json::from_str(&echo).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(r#"{"n": 1, "bogus": 3}"#, Some(Command::Classify)).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn zero_gamma_rejected() {
        let err = parse_config(
            r#"{"n": 1, "schedule": {"kind": "log", "b": 0.1, "gamma": 0}, "T": 100}"#,
            Some(Command::Simulate),
        )
        .unwrap_err();
        assert!(err.to_string().contains("gamma in (0, 1]"), "{err}");
    }

    #[test]
    fn strong_attraction_warns() {
        let spec = parse_config(
            r#"{"n": 1, "schedule": {"kind": "constant", "b": -2.0}, "T": 100}"#,
            Some(Command::Simulate),
        )
        .unwrap();
        assert_eq!(spec.warnings.len(), 1);
        assert!(spec.warnings[0].contains("1/Lambda"));
        let spec = parse_config(
            r#"{"n": 1, "schedule": {"kind": "constant", "b": -1.0}, "T": 100}"#,
            Some(Command::Simulate),
        )
        .unwrap();
        assert!(spec.warnings.is_empty());
    }

    #[test]
    fn command_from_document() {
        let spec = parse_config(r#"{"command": "lambda-table"}"#, None).unwrap();
        assert_eq!(spec.command(), Command::LambdaTable);
        match spec.params {
            CommandParams::LambdaTable(p) => assert_eq!(p.ns.len(), 13),
            _ => unreachable!(),
        }
        assert!(parse_config("{}", None).is_err());
    }

    #[test]
    fn precondition_violations() {
        let bad = [
            (r#"{"n": 1, "schedule": {"kind": "constant", "b": 0}, "T": 100, "h0": 0}"#, "h0"),
            (r#"{"n": 1, "schedule": {"kind": "constant", "b": 0}, "T": 0.5}"#, "T"),
            (r#"{"n": 0, "schedule": {"kind": "constant", "b": 0}, "T": 10}"#, "n"),
            (r#"{"n": 1, "schedule": {"kind": "constant", "b": 0}}"#, "T"),
        ];
        for (doc, key) in bad {
            let err = parse_config(doc, Some(Command::Simulate)).unwrap_err().to_string();
            assert!(err.contains(key), "{doc}: {err}");
        }
        assert!(parse_config(r#"{"ns": [0, 1]}"#, Some(Command::LambdaTable)).is_err());
        assert!(parse_config(r#"{"r_step": 0}"#, Some(Command::ProfileDump)).is_err());
    }

    #[test]
    fn analysis_commands() {
        let spec = parse_config(
            r#"{"n": 1, "schedule": {"kind": "log", "b": 0.25}, "T": 1000, "n_seeds": 4,
                "observable": "|m|", "window": [10, 1000]}"#,
            Some(Command::Rate),
        )
        .unwrap();
        match &spec.params {
            CommandParams::Rate(p) => {
                assert_eq!(p.observable, Observable::FeatureNorm);
                assert_eq!(p.run.n_seeds, 4);
            }
            _ => unreachable!(),
        }
        assert!(parse_config(
            r#"{"n": 1, "schedule": {"kind": "log", "b": 0.25}, "T": 1000, "window": [10, 5000]}"#,
            Some(Command::Rate)
        )
        .is_err());
        let spec = parse_config(r#"{"n": 2, "b": -3}"#, Some(Command::Classify)).unwrap();
        assert_eq!(spec.command(), Command::Classify);
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use sid_sphere::config::{self, Command, ExperimentSpec, Format};
use sid_sphere::output::{self, Manifest};
use sid_sphere::runner::{self, EXIT_POSTCONDITION};
use sid_sphere::{Error, Result};

/// Self-interacting diffusions on S^n: Gibbs numerics, simulation and
/// convergence diagnostics.
#[derive(Debug, Parser)]
#[command(name = "sid-sphere", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,

    /// JSON config document, or a manifest from an earlier run to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Worker threads for ensembles.
    #[arg(long, global = true, env = "SID_SPHERE_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Lambda(n), Lambda(n)(n+1) and argmax for a list of dimensions.
    LambdaTable,
    /// rho and lambda on a radial grid.
    ProfileDump,
    /// One trajectory.
    Simulate,
    /// Independent trajectories over consecutive seeds.
    Ensemble,
    /// Log-log convergence slopes with the theoretical band check.
    Rate,
    /// Shadowing residual against the limiting flow.
    Shadow,
    /// Regime of a constant schedule.
    Classify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::LambdaTable => Command::LambdaTable,
            Cmd::ProfileDump => Command::ProfileDump,
            Cmd::Simulate => Command::Simulate,
            Cmd::Ensemble => Command::Ensemble,
            Cmd::Rate => Command::Rate,
            Cmd::Shadow => Command::Shadow,
            Cmd::Classify => Command::Classify,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentSpec> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let doc: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
    };

    if doc.get("manifest_version").is_some() {
        let manifest: Manifest = serde_json::from_value(doc).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        let mut spec = manifest.spec;
        if let Some(cmd) = cli.command {
            if Command::from(cmd) != spec.command() {
                return Err(Error::Config(format!(
                    "manifest is for `{}`, not `{}`",
                    spec.command().name(),
                    Command::from(cmd).name()
                )));
            }
        }
        if let Some(seed) = cli.seed {
            if let Some(run) = spec.run_params_mut() {
                run.sim.seed = seed;
            }
        }
        if let Some(out) = &cli.out {
            spec.out = Some(out.to_string_lossy().into_owned());
        }
        if let Some(f) = cli.format {
            spec.format = f.into();
        }
        if cli.threads.is_some() {
            spec.threads = cli.threads;
        }
        return Ok(spec);
    }

    let Value::Object(mut map) = doc else {
        return Err(Error::Config("config document must be a JSON object".into()));
    };
    if let Some(seed) = cli.seed {
        map.insert("seed".into(), seed.into());
    }
    if let Some(out) = &cli.out {
        map.insert("out".into(), out.to_string_lossy().into_owned().into());
    }
    if let Some(f) = cli.format {
        map.insert("format".into(), serde_json::to_value(Format::from(f)).expect("format serializes"));
    }
    if let Some(t) = cli.threads {
        map.insert("threads".into(), t.into());
    }
    config::parse_config(&Value::Object(map).to_string(), cli.command.map(Command::from))
}

fn run(cli: &Cli) -> Result<bool> {
    let spec = resolve(cli)?;
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    let outcome = runner::run_command(&spec)?;
    output::write_atomically(&outcome.all_artifacts())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&outcome.manifest).expect("manifest serializes")
    );
    for note in &outcome.manifest.notes {
        if !spec.warnings.contains(note) {
            eprintln!("postcondition: {note}");
        }
    }
    Ok(outcome.postconditions_ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_POSTCONDITION as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code(&e) as u8)
        }
    }
}

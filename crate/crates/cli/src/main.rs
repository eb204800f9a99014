//! `qgraph`: runs one manifest-described experiment and writes CSV and JSON artifacts.

mod commands;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use manifest::Command;

#[derive(Debug, Parser)]
#[command(name = "qgraph", version, about = "Quantum graph circuit experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; overrides the manifest's `output` field.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid input at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{kind}: {message}")]
    Numerical { kind: &'static str, message: String },
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        RunError::Schema { path: path.into(), message: message.into() }
    }

    pub fn core(e: qgraph_core::Error) -> Self {
        use qgraph_core::Error as E;
        match e {
            E::Schema { path, message } => RunError::Schema { path, message },
            E::OutOfHorizon { .. } => RunError::schema("control", e.to_string()),
            other => {
                let kind = match &other {
                    E::GapViolation { .. } => "gap_violation",
                    E::NotPositiveDefinite(_) => "not_positive_definite",
                    E::NotSemibounded(_) => "not_semibounded",
                    E::GaugeMismatch { .. } => "gauge_mismatch",
                    E::NotDifferentiable(_) => "not_differentiable",
                    E::MemoryBudget { .. } => "memory_budget",
                    E::MollifierTooWide { .. } => "mollifier_too_wide",
                    E::ZeroCoupling(_) => "zero_coupling",
                    _ => "numerical",
                };
                RunError::Numerical { kind, message: other.to_string() }
            }
        }
    }

    /// Prefixes the field path of a schema error.
    pub fn under(self, prefix: &str) -> Self {
        match self {
            RunError::Schema { path, message } => RunError::Schema { path: manifest::join(prefix, &path), message },
            other => other,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            RunError::Schema { .. } => 2,
            RunError::Numerical { .. } => 3,
            RunError::Io(_) => 1,
        }
    }

    fn record(&self) -> serde_json::Value {
        match self {
            RunError::Schema { path, message } => serde_json::json!({ "error": "schema", "path": path, "message": message }),
            RunError::Numerical { kind, message } => serde_json::json!({ "error": kind, "message": message }),
            RunError::Io(e) => serde_json::json!({ "error": "io", "message": e.to_string() }),
        }
    }
}

fn run(cli: &Cli) -> Result<PathBuf, RunError> {
    if cli.threads == 0 {
        return Err(RunError::schema("--threads", "at least one thread"));
    }
    let loaded = manifest::load(&cli.manifest)?;
    if loaded.command != cli.command {
        return Err(RunError::schema(
            "command",
            format!("manifest is for `{}`, not `{}`", loaded.command.name(), cli.command.name()),
        ));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| loaded.output.clone())
        .ok_or_else(|| RunError::schema("output", "no output directory given"))?;
    std::fs::create_dir_all(&out)?;
    commands::execute(&loaded, &out, cli.threads)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}

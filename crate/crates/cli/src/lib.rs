//! `routhlab` command-line front end.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use routhlab_core::report::VerificationReport;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::commands::Context;
use crate::error::{CliError, EXIT_NUMERICAL, EXIT_PASS, EXIT_USAGE, EXIT_VERIFICATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Describe,
    IntegrateEl,
    Finslerize,
    Geodesic,
    Verify,
    RouthReduce,
    Plot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Describe => "describe",
            Command::IntegrateEl => "integrate-el",
            Command::Finslerize => "finslerize",
            Command::Geodesic => "geodesic",
            Command::Verify => "verify",
            Command::RouthReduce => "routh-reduce",
            Command::Plot => "plot",
        }
    }
}

/// Energy-level geometry of autonomous Lagrangians.
#[derive(Debug, Parser)]
#[command(name = "routhlab", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for sampled checks; overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Contents of `<command>.report.json`.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub config: String,
    pub name: Option<String>,
    pub seed: u64,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub summary: Map<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<VerificationReport>,
}

pub fn report_exit_code(report: &VerificationReport) -> i32 {
    if report.overall {
        EXIT_PASS
    } else if report.numerical_failure {
        EXIT_NUMERICAL
    } else {
        EXIT_VERIFICATION
    }
}

pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            }
        }
    }
}

fn execute(command: Command, ctx: &Context) -> Result<commands::Outcome, CliError> {
    match command {
        Command::Describe => commands::describe(ctx),
        Command::IntegrateEl => commands::integrate_el_cmd(ctx),
        Command::Finslerize => commands::finslerize(ctx),
        Command::Geodesic => commands::geodesic(ctx),
        Command::Verify => commands::verify(ctx),
        Command::RouthReduce => commands::routh_reduce(ctx),
        Command::Plot => commands::plot(ctx),
    }
}

pub fn run(cli: &Cli) -> i32 {
    let loaded = match config::load(&cli.config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("routhlab: {e}");
            return e.exit_code();
        }
    };
    let cfg = &loaded.config;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let out_dir = match (&cli.out, &cfg.output.dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => loaded.resolve(d),
        (None, None) => PathBuf::from("routhlab-out"),
    };
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("routhlab: {}", CliError::io(&out_dir, e));
        return EXIT_USAGE;
    }
    let mut record = RunRecord {
        command: cli.command.name().to_string(),
        config: cli.config.display().to_string(),
        name: cfg.name.clone(),
        seed,
        exit_code: EXIT_PASS,
        error: None,
        summary: Map::new(),
        report: None,
    };
    let ctx = Context {
        loaded: loaded.clone(),
        out_dir: out_dir.clone(),
        seed,
    };
    match execute(cli.command, &ctx) {
        Ok(outcome) => {
            record.exit_code = report_exit_code(&outcome.report);
            record.summary = outcome.summary;
            record.report = Some(outcome.report);
        }
        Err(e) => {
            eprintln!("routhlab: {e}");
            record.exit_code = e.exit_code();
            record.error = Some(e.to_string());
        }
    }
    let path = out_dir.join(format!("{}.report.json", cli.command.name()));
    if let Err(e) = write_record(&path, &record) {
        eprintln!("routhlab: {e}");
        return EXIT_USAGE;
    }
    print_summary(&record, &path);
    record.exit_code
}

fn write_record(path: &Path, record: &RunRecord) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(record).map_err(|e| CliError::io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn print_summary(record: &RunRecord, path: &Path) {
    let status = match record.exit_code {
        EXIT_PASS => "PASS",
        EXIT_VERIFICATION => "FAIL",
        EXIT_NUMERICAL => "NUMERICAL FAILURE",
        _ => "ERROR",
    };
    println!("{}: {status} (exit {})", record.command, record.exit_code);
    for (k, v) in &record.summary {
        println!("  {k}: {v}");
    }
    if let Some(r) = &record.report {
        for m in r.failures() {
            println!("  failed {}: {:e} (tolerance {:e})", m.label, m.value, m.tolerance);
        }
    }
    println!("  report: {}", path.display());
}

//! `rhpert`: configuration parsing, subcommand dispatch and record output.

pub mod commands;
pub mod config;
pub mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rhpert_core::records::{to_csv_string, to_json_string, to_long_csv};
use rhpert_core::RunRecord;

pub use commands::Overrides;
pub use config::{Format, RunConfig};
pub use verify::{cmd_verify, VerifyReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] rhpert_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Exit statuses: success, failed verification, configuration or usage error.
pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "rhpert", version, about = "Repeated harmonic perturbations of a quantum oscillator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Cross-check against the truncated Fock-space oracle.
    #[arg(long, global = true)]
    pub oracle: bool,
    /// Oracle Fock cutoff D.
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// Override every verification tolerance.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Also write the records as long-format CSV (run_id, quantity, value).
    #[arg(long, global = true)]
    pub plot: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Step scalars, normal modes and hypothesis flags.
    Kernel,
    /// Per-step effective temperatures and entropies.
    Simulate,
    /// Reduced characteristic functions of selected subsystems.
    Subsystem,
    /// Short-time limit along a schedule.
    Limit,
    /// Parameter grid.
    Sweep,
    /// Invariant suite and oracle cross-checks.
    Verify,
}

pub fn render(records: &[RunRecord], format: Format) -> String {
    match format {
        Format::Csv => to_csv_string(records),
        Format::Json => to_json_string(records),
    }
}

fn write_text(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

/// Runs one parsed invocation and returns its exit status.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.tolerance {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::Config(format!("tolerance {t} must be finite and >= 0")));
        }
    }
    let opts = Overrides { oracle: cli.oracle, cutoff: cli.cutoff, tolerance: cli.tolerance };
    let mut status = EXIT_OK;
    let records = match cli.command {
        Command::Kernel => commands::cmd_kernel(&cfg)?,
        Command::Simulate => commands::cmd_simulate(&cfg, &opts)?,
        Command::Subsystem => commands::cmd_subsystem(&cfg, &opts)?,
        Command::Limit => commands::cmd_limit(&cfg)?,
        Command::Sweep => commands::cmd_sweep(&cfg, &opts)?,
        Command::Verify => {
            let report = cmd_verify(&cfg, &opts)?;
            for c in report.failures() {
                eprintln!("FAIL {}/{}: {:e} >= {:e}", c.suite, c.name, c.measured, c.tolerance);
            }
            if !report.passed() {
                status = EXIT_FAILED;
            }
            report.to_records()
        }
    };
    let format = cli.format.or(cfg.output.format).unwrap_or_default();
    let output = cli.output.as_ref().or(cfg.output.path.as_ref());
    write_text(output, &render(&records, format))?;
    if let Some(plot) = &cli.plot {
        write_text(Some(plot), &to_long_csv(&records))?;
    }
    Ok(status)
}

/// Parses `args` (program name first) and runs; usage errors map to 2.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("rhpert: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

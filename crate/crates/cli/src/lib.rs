//! Command-line front end for `moeppi`.
//!
//! [`run`] parses arguments, dispatches to the core library and writes the
//! report.  Exit codes: 0 on success, 2 on usage errors, 1 on data errors.

mod args;
mod estimate;
mod simulate;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Cli, Command, FormatArg, OutputArgs, VariantArg};

pub const THREADS_ENV: &str = "MOEPPI_THREADS";

#[derive(Debug)]
pub(crate) enum CliError {
    /// Bad flag combination; exit code 2.
    Usage(String),
    /// Failure while reading or analysing data; exit code 1.
    Data(moeppi::Error),
}

impl From<moeppi::Error> for CliError {
    fn from(e: moeppi::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(moeppi::Error::Io(e))
    }
}

pub(crate) type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

pub(crate) fn alpha(out: &OutputArgs) -> CliResult<moeppi::Alpha> {
    Ok(moeppi::Alpha::new(out.alpha)?)
}

pub(crate) fn variant(v: VariantArg) -> moeppi::Variant {
    match v {
        VariantArg::Basic => moeppi::Variant::Basic,
        VariantArg::Plus => moeppi::Variant::Plus,
    }
}

/// A rendered report together with its format.
pub(crate) struct Report {
    pub body: String,
}

pub(crate) fn resolve_format(out: &OutputArgs, default: FormatArg) -> FormatArg {
    out.format.unwrap_or(default)
}

fn emit(report: Report, out_path: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let mut body = report.body;
    if !body.ends_with('\n') {
        body.push('\n');
    }
    match out_path {
        Some(path) => {
            std::fs::write(path, body.as_bytes())?;
            writeln!(stdout, "report written to {}", path.display())?;
        }
        None => stdout.write_all(body.as_bytes())?,
    }
    Ok(())
}

/// Caps the global worker pool from `MOEPPI_THREADS`.  The pool can only be
/// built once per process; later calls keep the first setting.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = match raw.trim().parse() {
        Ok(t) if t >= 1 => t,
        _ => return usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")),
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    let result = configure_threads().and_then(|()| dispatch(cli, stdout));
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let (report, out_path) = match &cli.command {
        Command::Estimate { data, task, output } => (estimate::estimate(data, task, output)?, output.out.as_deref()),
        Command::Compare { data, task, coef, output } => {
            (estimate::compare(data, task, *coef, output)?, output.out.as_deref())
        }
        Command::Simulate { task, q, grid_steps, n, bootstrap_b, sim, output } => {
            let opts = simulate::SimulateOptions { task: *task, q: *q, grid_steps: *grid_steps, n: *n, bootstrap_b: *bootstrap_b };
            (simulate::simulate(&opts, sim, output)?, output.out.as_deref())
        }
        Command::Power { n_grid, target_power, sim, output } => {
            (simulate::power(n_grid, *target_power, sim, output)?, output.out.as_deref())
        }
    };
    emit(report, out_path, stdout)
}

//! `artjoint` command-line front end.
//!
//! Exit codes: 0 success, 1 domain failure (invalid asset, comparison over
//! tolerance, fit that did not converge), 2 usage error (bad flags, missing
//! input files, unknown fixture), 3 internal error.

mod commands;

use std::io::Write;
use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "artjoint", version, about = "Simulate and fit articulated-object digital twins")]
struct Cli {
    /// Print a machine-readable JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check asset documents and report every problem found.
    Validate {
        #[arg(required = true)]
        assets: Vec<PathBuf>,
    },
    /// Run scenarios and write their trajectories as CSV.
    Simulate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Output CSV; a directory when several scenarios are given.
        #[arg(long, short)]
        out: PathBuf,
        /// Override the scenario timestep.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the scenario duration.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Compare two trajectory CSVs; succeeds iff the pooled RMSE is within tolerance.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Fit joint parameters to an observed trajectory.
    Fit {
        fitspec: PathBuf,
        /// Where to write the fitted parameters as JSON.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a bundled fixture's canonical scenario and summarize it. Lists the
    /// fixtures when no name is given.
    Demo { fixture: Option<String> },
    /// Per-sample mean of several runs with identical time bases.
    Average {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

/// Result of a command: exit code, human-readable text and JSON document.
pub struct Report {
    pub code: u8,
    pub text: String,
    pub json: Value,
}

impl Report {
    pub fn ok(text: String, json: Value) -> Self {
        Self { code: 0, text, json }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Domain,
    Usage,
    Internal,
}

impl FailureClass {
    fn code(self) -> u8 {
        match self {
            FailureClass::Domain => 1,
            FailureClass::Usage => 2,
            FailureClass::Internal => 3,
        }
    }

    fn label(self) -> &'static str {
        match self {
            FailureClass::Domain => "error",
            FailureClass::Usage => "usage",
            FailureClass::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub class: FailureClass,
    pub message: String,
}

impl Failure {
    pub fn domain(message: impl ToString) -> Self {
        Self {
            class: FailureClass::Domain,
            message: message.to_string(),
        }
    }

    pub fn usage(message: impl ToString) -> Self {
        Self {
            class: FailureClass::Usage,
            message: message.to_string(),
        }
    }

    pub fn internal(message: impl ToString) -> Self {
        Self {
            class: FailureClass::Internal,
            message: message.to_string(),
        }
    }
}

fn dispatch(command: Command) -> Result<Report, Failure> {
    match command {
        Command::Validate { assets } => commands::validate(&assets),
        Command::Simulate {
            scenarios,
            out,
            dt,
            duration,
        } => commands::simulate(&scenarios, &out, dt, duration),
        Command::Compare { a, b, tolerance } => commands::compare(&a, &b, tolerance),
        Command::Fit { fitspec, out } => commands::fit(&fitspec, out.as_deref()),
        Command::Demo { fixture } => commands::demo(fixture.as_deref()),
        Command::Average { runs, out } => commands::average(&runs, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;

    panic::set_hook(Box::new(|_| {}));
    let outcome = panic::catch_unwind(|| dispatch(cli.command)).unwrap_or_else(|p| {
        let message = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure::internal(message))
    });

    let mut stdout = std::io::stdout().lock();
    let code = match outcome {
        Ok(report) => {
            let printed = if json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&report.json).unwrap())
            } else {
                write!(stdout, "{}", report.text)
            };
            if printed.is_err() {
                return ExitCode::from(FailureClass::Internal.code());
            }
            report.code
        }
        Err(f) => {
            let line = f.message.replace('\n', " ");
            eprintln!("artjoint: {}: {line}", f.class.label());
            if json {
                let doc = json!({ "error": { "class": f.class.label(), "message": line } });
                let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&doc).unwrap());
            }
            f.class.code()
        }
    };
    ExitCode::from(code)
}

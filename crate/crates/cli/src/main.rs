//! `floc`: datasets, training, evaluation, C export, simulation and the
//! gateway server, exchanging artifacts through files.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print
//! one JSON line on stderr: `{"error":"usage"|"runtime","message":...}`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "floc", version, about = "Biofloc tank water-quality toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label readings with the ground-truth rule. Reads a CSV with
    /// `temperature`, `ph` and `tds` columns and writes
    /// `condition,temperature,ph,tds`.
    Label {
        csv: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config file supplying `labeling_thresholds`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a seeded synthetic dataset.
    GenData {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        seed: u64,
        /// Label flip probability in [0, 1].
        #[arg(long, default_value_t = 0.0, value_parser = parse_probability)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a regression tree and write it as JSON.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
        max_depth: u64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..))]
        min_samples_split: u64,
        #[arg(long, default_value_t = 0.0, value_parser = parse_non_negative)]
        min_impurity_decrease: f64,
    },
    /// Score a model on a dataset; prints the report as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Export a model as a standalone C function.
    Codegen {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "water_condition")]
        fn_name: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a closed-loop scenario; output format follows the extension
    /// (`.csv` or `.jsonl`).
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the recorded day trace as CSV.
    ReplayTable2 {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the gateway until interrupted. Falls back to $FLOC_CONFIG, then
    /// built-in defaults; $FLOC_LISTEN overrides the HTTP address.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("{p} is outside [0, 1]"))
    }
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and >= 0"))
    }
}

/// A failure, split by who has to fix it.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

/// Joins the error chain with `: `, skipping causes whose text the
/// previous message already includes.
fn chain_message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            return fail("usage", "missing subcommand; see --help", 2);
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            return fail("usage", first.trim_start_matches("error: "), 2);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => fail("usage", &msg, 2),
        Err(CliError::Runtime(e)) => fail("runtime", &chain_message(&e), 1),
    }
}

//! Batch front-end for the subordinator tail and heat-kernel estimate toolkit.

mod cmds;
mod out;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sub {
    PhiTable,
    Conditions,
    Tails,
    Fundsol,
    Estimate,
    Compare,
    Boundary,
    Report,
}

impl Sub {
    fn name(self) -> &'static str {
        match self {
            Sub::PhiTable => "phi-table",
            Sub::Conditions => "conditions",
            Sub::Tails => "tails",
            Sub::Fundsol => "fundsol",
            Sub::Estimate => "estimate",
            Sub::Compare => "compare",
            Sub::Boundary => "boundary",
            Sub::Report => "report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "subtail", version, about = "Subordinator tails, Bernstein calculus and heat-kernel estimate checks")]
struct Args {
    subcommand: Sub,
    /// JSON configuration for the subcommand
    #[arg(long)]
    config: PathBuf,
    /// overrides the `sim.seed` of the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// overrides the case tag
    #[arg(long)]
    case: Option<String>,
    /// overrides `sim.n_paths`
    #[arg(long)]
    paths: Option<usize>,
    /// overrides the spread budget
    #[arg(long)]
    budget: Option<f64>,
}

/// Failure with its exit code and a JSON payload for stderr.
pub struct Fail {
    pub code: u8,
    pub payload: Value,
}

impl Fail {
    pub fn schema(pointer: String, message: String) -> Self {
        Fail { code: 2, payload: json!({ "error": "schema", "pointer": pointer, "message": message }) }
    }
}

impl From<subtail::Error> for Fail {
    fn from(e: subtail::Error) -> Self {
        use subtail::Error::*;
        let (code, kind) = match &e {
            Config(_) => (2, "config"),
            Regime(_) => (3, "regime"),
            _ => (4, "runtime"),
        };
        Fail { code, payload: json!({ "error": kind, "message": e.to_string() }) }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail { code: 4, payload: json!({ "error": "io", "message": e.to_string() }) }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match cmds::run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f.payload).unwrap());
            ExitCode::from(f.code)
        }
    }
}

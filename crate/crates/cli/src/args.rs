//! Command-line and config-file options.
//!
//! Every subcommand's options are `Option`s so that a value can come from the
//! command line, from the matching section of `--config`, or from the
//! built-in default, in that order of precedence.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::exit::{usage, CliResult};

#[derive(Parser, Debug)]
#[command(name = "cayley-rd", version, about = "Reaction-diffusion models on Cayley trees", long_about = None)]
pub struct Cli {
    /// JSON file with one object of defaults per subcommand, e.g.
    /// {"simulate": {"runs": 1000}}; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    /// Write the run manifest here (default: next to --output, if any).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check nonnegativity, link symmetry and the autonomy criterion.
    Validate(ValidateArgs),
    /// Print the closed-equation coefficients of an autonomous model.
    Coefficients(CoefficientsArgs),
    /// Tabulate the shell Green's function G_a^b(t).
    Green(GreenArgs),
    /// Evolve an initial density profile.
    Evolve(EvolveArgs),
    /// Gillespie ensemble on a finite tree.
    Simulate(SimulateArgs),
    /// Exact master equation against the closed site equation.
    Oracle(OracleArgs),
    /// Compare the quadrature with the large-time and large-xi forms.
    Asymptotics(AsymptoticsArgs),
    /// Cross-check solvers on the scenarios of a scenario file.
    Compare(CompareArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Coefficients(_) => "coefficients",
            Command::Green(_) => "green",
            Command::Evolve(_) => "evolve",
            Command::Simulate(_) => "simulate",
            Command::Oracle(_) => "oracle",
            Command::Asymptotics(_) => "asymptotics",
            Command::Compare(_) => "compare",
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ValidateArgs {
    /// Rate file.
    #[arg(long)]
    pub rates: Option<PathBuf>,
    /// Accepted autonomy residual.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Print the report as JSON.
    #[arg(long)]
    #[serde(default)]
    pub json: bool,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CoefficientsArgs {
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Limit {
    Chain,
    LargeTime,
    LargeXi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Conservation,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GreenArgs {
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest target shell a (default 10).
    #[arg(long)]
    pub a_max: Option<u32>,
    /// Largest source shell b (default 10).
    #[arg(long)]
    pub b_max: Option<u32>,
    /// Comma-separated times.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Use a closed form instead of the quadrature.
    #[arg(long, value_enum)]
    pub limit: Option<Limit>,
    /// Emit (log_prefactor, integral) pairs instead of values.
    #[arg(long)]
    #[serde(default)]
    pub log_space: bool,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Extra diagnostics printed to stderr.
    #[arg(long, value_enum)]
    pub check: Option<Check>,
    /// Output directory for CSV, or file for JSON (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Shell,
    Green,
    Site,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvolveArgs {
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Initial-profile JSON file.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Solver (default shell).
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    /// Largest shell written (default: initial support + 10).
    #[arg(long)]
    pub shells: Option<u32>,
    /// Truncation shell of the shell solver (default: automatic).
    #[arg(long)]
    pub a_max: Option<usize>,
    /// Tree depth for the site solver.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Write the dynamic part rho - rho_ref instead of rho.
    #[arg(long)]
    #[serde(default)]
    pub dynamic: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long)]
    pub rates: Option<PathBuf>,
    /// Override the coordination number of the rate file.
    #[arg(long)]
    pub xi: Option<u32>,
    #[arg(long)]
    pub depth: Option<u32>,
    /// empty, full, bernoulli:P or bitmask:HEX (default empty).
    #[arg(long)]
    pub init: Option<String>,
    /// Number of trajectories (default 1000).
    #[arg(long)]
    pub runs: Option<u64>,
    /// Master seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// CSV output file; the summary goes next to it.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OracleArgs {
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long)]
    pub xi: Option<u32>,
    /// Tree depth (default 2); at most 16 sites.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Final time (default 1).
    #[arg(long)]
    pub t: Option<f64>,
    /// Largest accepted gap (default 1e-6).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AsymptoticsArgs {
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub a: Option<u32>,
    #[arg(long)]
    pub b: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CompareArgs {
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Fills options missing on the command line from `config[section]`.
pub fn merge_config<T>(args: &T, config: Option<&Value>, section: &str) -> CliResult<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = match config.and_then(|c| c.get(section)) {
        Some(Value::Object(map)) => map.clone(),
        Some(_) => {
            return Err(usage(format!(
                "config section {section:?} must be an object"
            )))
        }
        None => serde_json::Map::new(),
    };
    let Value::Object(flags) = serde_json::to_value(args).expect("options serialize") else {
        unreachable!("options are a struct");
    };
    for (k, v) in flags {
        if !(v.is_null() || v == Value::Bool(false)) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| usage(format!("config section {section:?}: {e}")))
}

pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| usage(format!("missing --{flag}")))
}

mod args;
mod commands;
mod compare;
mod exit;
mod manifest;
mod output;

use std::process::ExitCode;

use clap::Parser;
use serde_json::Value;

use crate::args::{Cli, Command};
use crate::exit::{usage, CliResult};

/// Settings shared by every subcommand.
pub struct Context {
    pub exec: cayley_rd::Execution,
    pub threads: Option<usize>,
    pub sequential: bool,
    pub manifest: Option<std::path::PathBuf>,
    pub config: Option<Value>,
}

fn load_config(path: &std::path::Path) -> CliResult<Value> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(usage(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    }
    Ok(value)
}

fn run(cli: Cli) -> CliResult<i32> {
    let config = cli.config.as_deref().map(load_config).transpose()?;
    let ctx = Context {
        exec: if cli.sequential {
            cayley_rd::Execution::Sequential
        } else {
            cayley_rd::Execution::Parallel
        },
        threads: cli.threads,
        sequential: cli.sequential,
        manifest: cli.manifest,
        config,
    };
    if ctx.threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    let command = cli.command;
    cayley_rd::install(ctx.threads, move || match &command {
        Command::Validate(a) => commands::validate(&ctx, a),
        Command::Coefficients(a) => commands::coefficients(&ctx, a),
        Command::Green(a) => commands::green(&ctx, a),
        Command::Evolve(a) => commands::evolve(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Oracle(a) => commands::oracle(&ctx, a),
        Command::Asymptotics(a) => commands::asymptotics(&ctx, a),
        Command::Compare(a) => compare::compare(&ctx, a),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    log::debug!("running {}", cli.command.name());
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

//! `ctxrank` — staged command-line pipeline over one experiment config:
//! simulate a click log, train rankers, export and cluster context
//! vectors, train boosted trees, evaluate, compare, and report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod stages;

use stages::{Cmd, Env, CONFIG_ENV};

#[derive(Parser)]
#[command(
    name = "ctxrank",
    version,
    about = "Context-aware learning-to-rank pipeline",
    after_help = "The experiment config (TOML) is taken from --config, falling back to \
                  the CTXRANK_CONFIG environment variable."
)]
struct Cli {
    /// Experiment config file; defaults to $CTXRANK_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory all stages read artifacts from and write them to.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    out: PathBuf,

    #[command(subcommand)]
    cmd: Cmd,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = match Env::new(cli.config, cli.out) {
        Ok(env) => env,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("hint: pass --config <FILE> or set {CONFIG_ENV}");
            return ExitCode::FAILURE;
        }
    };
    match stages::run(&env, &cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

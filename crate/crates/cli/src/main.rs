use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use riskfuse_cli::{commands::print_outcomes, run_command, Command};

/// Multi-judge rare disease risk screening pipeline.
#[derive(Parser)]
#[command(name = "riskfuse", version)]
struct Args {
    /// Stage to run; `pipeline` chains synth, split, assess, align, attribute,
    /// distill and evaluate.
    #[arg(value_enum)]
    command: Command,
    /// Path to the TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Rerun stages even when their manifest says they are up to date.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match run_command(args.command, &args.config, args.force) {
        Ok(outcomes) => {
            let _ = print_outcomes(&outcomes, std::io::stdout().lock());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvpsv::cli::{self, RunConfig};

#[derive(Parser)]
#[command(
    name = "tvpsv",
    version,
    about = "TVP-VAR density forecasts and portfolio backtests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// run configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory, overrides the config
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// master seed, overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// concurrent (model, window) jobs
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic panel and its latent truth
    Simulate,
    /// Expanding-window forecasts and scores for every configured model
    Forecast,
    /// Portfolio backtest from stored forecast archives
    Trade,
    /// Re-hash outputs and check them against the config
    Verify,
}

fn run(args: Cli) -> tvpsv::Result<()> {
    let path = args
        .config
        .ok_or_else(|| tvpsv::Error::InvalidInput("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(o) = args.output {
        cfg.output_dir = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    match args.command {
        Command::Simulate => {
            for f in cli::cmd_simulate(&cfg)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Forecast => {
            let s = cli::cmd_forecast(&cfg)?;
            println!("{} jobs run, {} reused from archives", s.computed, s.reused);
            for f in s.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Trade => {
            for f in cli::cmd_trade(&cfg)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Verify => {
            let r = cli::cmd_verify(&cfg)?;
            println!(
                "ok: {} files match config hash {}",
                r.checked, r.config_hash
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation errors; --help and --version succeed
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}

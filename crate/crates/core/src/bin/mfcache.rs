//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver did not converge
//! (artifacts are still written), 1 any other failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfcache::bench;
use mfcache::config::ExperimentConfig;
use mfcache::error::Error;

#[derive(Parser)]
#[command(name = "mfcache", version, about = "Edge-cache policy solver and fleet simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the policy list (comma separated).
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    /// Worker threads (defaults to the available cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the feedback caching policy and write the grids.
    Solve(CommonArgs),
    /// Run the fleet simulation for the configured policies.
    Simulate(CommonArgs),
    /// Delay/load sweep over inter-access-point distance and skew.
    Fig1(CommonArgs),
    /// Time-variant popularity comparison across all policies.
    Fig2(CommonArgs),
    /// Parse and validate a config; print the canonical echo and hash.
    ValidateConfig(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.run.master_seed = seed;
    }
    if let Some(policies) = &args.policy {
        config.run.policies = policies.clone();
    }
    config.validate()?;
    Ok(config)
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run() -> Result<ExitCode, Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => {
            let config = load_config(&args)?;
            init_threads(args.threads);
            let converged = bench::cmd_solve(&config, &args.out)?;
            if converged {
                println!("solve: converged; artifacts in {}", args.out.display());
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "solve: fixed point not reached within the iteration budget; artifacts in {}",
                    args.out.display()
                );
                Ok(ExitCode::from(3))
            }
        }
        Command::Simulate(args) => {
            let config = load_config(&args)?;
            init_threads(args.threads);
            let converged = bench::cmd_simulate(&config, &args.out)?;
            println!("simulate: metrics in {}", args.out.display());
            Ok(if converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        Command::Fig1(args) => {
            let config = load_config(&args)?;
            init_threads(args.threads);
            let stats = bench::cmd_fig1(&config, &args.out)?;
            for (beta, adv) in &stats.mfg_advantage_by_beta {
                println!("fig1: beta={beta}: mfg cost advantage over mpc = {:.2}%", adv * 100.0);
            }
            println!("fig1: sweep in {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Fig2(args) => {
            let config = load_config(&args)?;
            init_threads(args.threads);
            let stats = bench::cmd_fig2(&config, &args.out)?;
            for (policy, reduction) in &stats.reductions {
                println!(
                    "fig2: mfg reduces median total cost vs {policy} by {:.1}% (reference points: mpc 33%, lru 25%)",
                    reduction * 100.0
                );
            }
            println!("fig2: results in {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig(args) => {
            let config = load_config(&args)?;
            println!("# config hash: {}", config.content_hash());
            print!("{}", config.canonical_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e @ Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

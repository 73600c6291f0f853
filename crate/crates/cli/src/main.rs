use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use obstacle_lab::{cmd_check_energy, cmd_exponents, cmd_solve, cmd_sweep, ExperimentConfig, Outcome};

#[derive(Debug, Parser)]
#[command(name = "obstacle-lab", version, about = "Experiments on the singular obstacle problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Exponent tolerance; overrides `analysis.tolerance`.
    #[arg(long, value_name = "X")]
    tolerance: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the configured problem.
    Solve(Common),
    /// Fit growth exponents at the free boundary.
    Exponents {
        #[command(flatten)]
        common: Common,
        /// Analyze a `solution.csv` from an earlier solve instead of solving.
        #[arg(long, value_name = "PATH")]
        from: Option<PathBuf>,
    },
    /// Run the exponent analysis over a parameter grid.
    Sweep(Common),
    /// Check structural bounds and convexity of the configured density.
    CheckEnergy(Common),
}

fn load(common: &Common) -> singular_obstacle::Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(t) = common.tolerance {
        config.analysis.tolerance = t;
        config.validate()?;
    }
    let out = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
    Ok((config, out))
}

fn run(cli: Cli) -> singular_obstacle::Result<Outcome> {
    match cli.command {
        Command::Solve(common) => {
            let (config, out) = load(&common)?;
            cmd_solve(&config, &out)
        }
        Command::Exponents { common, from } => {
            let (config, out) = load(&common)?;
            cmd_exponents(&config, &out, from.as_deref())
        }
        Command::Sweep(common) => {
            let (config, out) = load(&common)?;
            cmd_sweep(&config, &out)
        }
        Command::CheckEnergy(common) => {
            let (config, out) = load(&common)?;
            cmd_check_energy(&config, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            if outcome.pass {
                println!("pass: {}", outcome.message);
                ExitCode::SUCCESS
            } else {
                println!("fail: {}", outcome.message);
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

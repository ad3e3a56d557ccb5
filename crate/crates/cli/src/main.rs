use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lossep_cli::commands::load_sweep_config;
use lossep_cli::{run_clutter_demo, run_sweep_command, run_two_point, run_validate, CliError, Outcome};

/// Loss-calibrated expectation propagation experiments.
#[derive(Parser)]
#[command(name = "lossep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clutter/reactor decision flip: exact vs EP vs Loss-EP.
    ClutterDemo {
        /// Dataset seed (defaults to the pinned one).
        #[arg(long, conflicts_with = "search")]
        seed: Option<u64>,
        /// Search for the first qualifying seed instead.
        #[arg(long)]
        search: bool,
        #[arg(long, default_value = "out/clutter-demo")]
        out: PathBuf,
    },
    /// Two-point GPC posterior on a grid against EP and Loss-EP.
    TwoPoint {
        /// Seed for the EP site order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/two-point")]
        out: PathBuf,
    },
    /// Utility-asymmetry by covariate-shift sweep.
    Sweep {
        /// JSON file with SweepConfig fields; absent fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out/sweep")]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Oracle cross-checks.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write validate.csv and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::ClutterDemo { seed, search, out } => run_clutter_demo(seed, search, &out),
        Command::TwoPoint { seed, out } => run_two_point(seed, &out),
        Command::Sweep { config, out, jobs } => {
            let config = load_sweep_config(config.as_deref())?;
            run_sweep_command(&config, &out, jobs)
        }
        Command::Validate { seed, out } => run_validate(seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(outcome) => {
            for line in &outcome.report {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.failures > 0 {
                eprintln!("{} run(s) failed", outcome.failures);
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use subnet_hpo::metrics::SpeedupRule;
use subnet_hpo_cli::commands::format_report;
use subnet_hpo_cli::{
    cmd_compare, cmd_report, cmd_run, parse_experiment_config, seed_offset, CliError,
};

#[derive(Debug, Parser)]
#[command(
    name = "subnet-hpo",
    version,
    about = "Multi-subnetwork hyperparameter optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run (or resume) every seed and fold of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `out` directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare paired runs of a method against a baseline.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        method: PathBuf,
        /// JSON report path; regret CSVs are written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Time the baseline at its first strict crossing of each level.
        #[arg(long)]
        aggressive_speedup: bool,
    },
    /// Print a saved report and write its regret curves as CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let plan = parse_experiment_config(&config)?;
            let out = out.unwrap_or_else(|| plan.out.clone());
            for s in cmd_run(&plan, &out, seed_offset()?)? {
                if s.resumed_trials == s.total_trials {
                    println!(
                        "{}: already complete ({} trials)",
                        s.path.display(),
                        s.total_trials
                    );
                } else {
                    println!(
                        "{}: {} trials ({} resumed), cumulative time {:.1}",
                        s.path.display(),
                        s.total_trials,
                        s.resumed_trials,
                        s.cumulative_time
                    );
                }
            }
        }
        Command::Compare {
            baseline,
            method,
            out,
            aggressive_speedup,
        } => {
            let rule = if aggressive_speedup {
                SpeedupRule::Aggressive
            } else {
                SpeedupRule::Conservative
            };
            let report = cmd_compare(&baseline, &method, &out, rule)?;
            print!("{}", format_report(&report));
        }
        Command::Report { input, csv } => {
            let report = cmd_report(&input, &csv)?;
            print!("{}", format_report(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as validation failures.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quasistat_cli::diff::{diff_runs, Tolerance};
use quasistat_cli::{execute, Experiment, RunRequest};

#[derive(Parser)]
#[command(name = "quasistat", version, about = "Quasi-stationary analysis of Binomial-Poisson population chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; must be absent or empty.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions on a grid.
    Validate(RunArgs),
    /// Simulate chains and law-of-large-numbers deviations.
    Simulate(RunArgs),
    /// Truncated-kernel QSDs and survival rates over the N list.
    Qsd(RunArgs),
    /// Flow path and chain-recurrent classes.
    Flow(RunArgs),
    /// Graph quasipotential and V-chain classes.
    Quasipotential(RunArgs),
    /// Full pipeline: validation, recurrence, QSDs, concentration and quasipotential overlay.
    Scaling(RunArgs),
    /// Compare two runs file by file.
    Diff {
        /// Manifest or run directory.
        a: PathBuf,
        /// Manifest or run directory.
        b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        atol: f64,
        #[arg(long, default_value_t = 0.0)]
        rtol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, args) = match cli.command {
        Command::Diff { a, b, atol, rtol } => {
            return match diff_runs(&a, &b, Tolerance { abs: atol, rel: rtol }) {
                Ok(report) => {
                    println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
                    if report.within_tolerance() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
        Command::Validate(a) => (Experiment::Validate, a),
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Qsd(a) => (Experiment::Qsd, a),
        Command::Flow(a) => (Experiment::Flow, a),
        Command::Quasipotential(a) => (Experiment::Quasipotential, a),
        Command::Scaling(a) => (Experiment::Scaling, a),
    };
    let req = RunRequest {
        config: args.config,
        seed: args.seed,
        threads: args.threads,
        out: args.out,
    };
    match execute(exp, &req) {
        Ok((dir, m)) => {
            println!("{}: {} files written to {}", m.experiment, m.files.len(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use reserve_opt::cli::{render_report, run, RunRequest, Subcommand};

#[derive(Parser)]
#[command(name = "reserve-opt", version, about = "Optimal cooling schedules for decremental reserve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Cheapest schedule that keeps the comfort band and pre-cools by the end.
    SolveReference(RunArgs),
    /// Alternative schedule that maximizes sellable decremental reserve.
    SolveCapacity(RunArgs),
    /// Schedule that honours the configured reserve instructions.
    SolveDelivery(RunArgs),
    /// Capacity solves over several benefit-cost ratios.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated R/P values.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        /// Comma-separated alpha_alt values, crossed with the ratios.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override a config value, e.g. `--set economics.R_over_P=1` or `--set x0=25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Number of control intervals.
    #[arg(long)]
    np: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn request(sub: Subcommand, a: RunArgs, ratios: Option<Vec<f64>>, alphas: Option<Vec<f64>>) -> RunRequest {
    RunRequest {
        subcommand: sub,
        config_path: a.config,
        output_dir: a.out,
        overrides: a.overrides,
        n_p: a.np,
        seed: a.seed,
        ratios,
        alphas,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let req = match cli.command {
        Command::SolveReference(a) => request(Subcommand::SolveReference, a, None, None),
        Command::SolveCapacity(a) => request(Subcommand::SolveCapacity, a, None, None),
        Command::SolveDelivery(a) => request(Subcommand::SolveDelivery, a, None, None),
        Command::Sweep { run, ratios, alphas } => request(Subcommand::Sweep, run, ratios, alphas),
    };
    match run(&req) {
        Ok(report) => {
            let _ = render_report(&report, std::io::stdout().lock());
            if report.success() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

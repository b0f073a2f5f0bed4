use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybrid_cycles::cli::{
    cmd_limits, cmd_simulate, cmd_stability, cmd_sweep, cmd_verify, CliResult, EXIT_OK,
};
use hybrid_cycles::config::RunConfig;
use hybrid_cycles::verify::VerifyContext;

#[derive(Parser)]
#[command(
    name = "hybrid-cycles",
    version,
    about = "Simulate hybrid systems and analyse their limit cycles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for randomized steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory; writes trajectory.csv, impacts.csv, summary.json.
    Simulate(RunArgs),
    /// Locate a periodic orbit and report its stability factor.
    Stability(RunArgs),
    /// Evaluate a parameter grid; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Worker threads (defaults to the config value or the CPU count).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Limit-set classifiers: interval maps, 1-D hybrid systems, omega estimates.
    Limits(RunArgs),
    /// Run the numerical acceptance suite.
    Verify {
        /// List the criteria without running them.
        #[arg(long)]
        list: bool,
        /// Integrator relative tolerance for all runs.
        #[arg(long, default_value_t = 1e-10)]
        rel_tol: f64,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

fn load(args: &RunArgs) -> CliResult<RunConfig> {
    Ok(RunConfig::from_path(&args.config)?)
}

fn print_json(v: &serde_json::Value) {
    // a closed pipe on stdout is not an error worth reporting
    let _ = writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(v).unwrap_or_default()
    );
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => print_json(&cmd_simulate(&load(&a)?, &a.out)?),
        Command::Stability(a) => print_json(&cmd_stability(&load(&a)?, &a.out)?),
        Command::Sweep { run, workers } => print_json(&cmd_sweep(&load(&run)?, &run.out, workers)?),
        Command::Limits(a) => print_json(&cmd_limits(&load(&a)?, &a.out)?),
        Command::Verify {
            list,
            rel_tol,
            only,
        } => {
            let mut ctx = VerifyContext {
                rel_tol,
                ..VerifyContext::default()
            };
            if let Some(seed) = cli.seed {
                ctx.seed = seed;
            }
            cmd_verify(&ctx, list, &only, std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HYBRID_CYCLES_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    if let Some(seed) = cli.seed {
        log::debug!("seed {seed}");
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

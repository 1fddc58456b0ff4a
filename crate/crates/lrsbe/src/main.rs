use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lrsbe::cli::{cmd_estimate, cmd_generate, cmd_sweep, exit_code, Overrides};

/// Beamspace channel estimation experiments.
#[derive(Parser)]
#[command(name = "lrsbe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's SNR grid with a single value (dB).
    #[arg(long)]
    snr: Option<f64>,
    /// Override the number of Monte-Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Force deterministic solver options.
    #[arg(long)]
    deterministic: bool,
    /// Worker threads for trial-level parallelism (default: logical cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a ground-truth channel realization and write it as JSON.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output channel JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one estimator on a freshly noised measurement of a stored channel.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Channel JSON produced by `generate`.
        #[arg(long)]
        channel: PathBuf,
        /// Estimator name (lrsbe | omp | ista | sbe | bsbe).
        #[arg(long)]
        solver: String,
        /// Optional per-iteration trace CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute the configured Monte-Carlo sweep; writes CSV and summary JSON.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Results CSV path; falls back to the config's out_csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        snr_db: c.snr,
        trials: c.trials,
        seed: c.seed,
        deterministic: c.deterministic,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Generate { common, .. }
        | Command::Estimate { common, .. }
        | Command::Sweep { common, .. } => common.clone(),
    };
    if let Some(jobs) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let ovr = overrides(&common);
    let result = match &cli.command {
        Command::Generate { common, out } => cmd_generate(&common.config, out, &ovr),
        Command::Estimate {
            common,
            channel,
            solver,
            out,
        } => cmd_estimate(&common.config, channel, solver, out.as_deref(), &ovr),
        Command::Sweep { common, out } => cmd_sweep(&common.config, out.as_deref(), &ovr),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

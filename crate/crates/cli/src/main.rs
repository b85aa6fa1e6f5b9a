use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod run;

use run::{Failure, RunDir};

#[derive(Parser)]
#[command(name = "paretorec", version, about = "Cross-domain sequential recommendation with Pareto-reconciled attention")]
struct Cli {
    /// Worker threads for evaluation.
    #[arg(long, global = true, env = "PARETOREC_THREADS", default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON config; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the artifacts of an existing run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain dataset.
    Generate(Common),
    /// Train one model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset: a run directory written by `generate` or a TSV file.
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate trained runs; several single-domain runs combine into one model.
    Evaluate {
        /// Run directory written by `train` (repeatable).
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Evaluation config (TOML or JSON); defaults to the first run's.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["test", "valid"])]
        holdout: String,
        /// Report directory; defaults to the first run's `reports/`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the evaluation seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split test users by single-domain and cross-domain correctness.
    Strata {
        /// Single-domain run directories, one per domain.
        #[arg(long = "single", required = true)]
        single: Vec<PathBuf>,
        /// Cross-domain run directory.
        #[arg(long)]
        cross: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Report directory; defaults to the cross run's `reports/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smoothed alpha2 trajectories of several runs.
    Trajectory {
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Static-weight sweep over the cross-domain weight.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated cross-domain weights; the recommendation weight is one minus each.
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.05,0.1,0.2,0.5")]
        weights: Vec<f64>,
    },
    /// Per-step cost of the reconciled methods against naive training.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Steps per method, warm-up included.
        #[arg(long, default_value_t = 240)]
        steps: usize,
        /// Bottleneck tokens for the autocdsr-plus run; 0 skips it.
        #[arg(long, default_value_t = 2)]
        ib_tokens: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if cli.threads == 0 {
        return Err(Failure::config("threads", "must be at least 1"));
    }
    let threads = cli.threads;
    match cli.command {
        Command::Generate(c) => {
            let cfg = run::synth_config(&c.config, c.seed)?;
            run::generate(cfg, &RunDir::create(&c.out, c.force)?)
        }
        Command::Train { common: c, data } => {
            let cfg = run::train_config(&c.config, c.seed, threads)?;
            run::train(cfg, &data, &RunDir::create(&c.out, c.force)?)
        }
        Command::Evaluate { runs, config, holdout, out, seed } => {
            run::evaluate(&runs, config.as_deref(), &holdout, out.as_deref(), seed, threads)
        }
        Command::Strata { single, cross, k, out } => run::strata(&single, &cross, k, out.as_deref(), threads),
        Command::Trajectory { runs, window, out } => run::trajectory(&runs, window, &out),
        Command::Sweep { common: c, data, weights } => {
            let cfg = run::train_config(&c.config, c.seed, threads)?;
            run::sweep(cfg, &data, &weights, &RunDir::create(&c.out, c.force)?)
        }
        Command::Bench { common: c, data, steps, ib_tokens } => {
            let cfg = run::train_config(&c.config, c.seed, threads)?;
            run::bench(cfg, &data, steps, ib_tokens, &RunDir::create(&c.out, c.force)?)
        }
    }
}

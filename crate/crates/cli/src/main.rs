//! `tailaug` command-line entry point.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "tailaug",
    version,
    about = "Tail-node structure augmentation for GCNs"
)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degree, partition and homophily statistics of a bundle.
    Analyze {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per seed.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a saved checkpoint.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the split recorded in the checkpoint.
        #[arg(long)]
        split: Option<String>,
    },
    /// Compare homophily of the original and augmented graphs.
    AugmentReport {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train over a one-dimensional hyperparameter grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Config key to vary.
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, conflicts_with = "log_grid")]
        values: Option<String>,
        /// `lo:hi:k`, k log-spaced points.
        #[arg(long)]
        log_grid: Option<String>,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Flat key = value file listing every key; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// `tail` or `public`.
    #[arg(long)]
    split: Option<String>,
    /// `no-aug-loss`, `no-prop` or `no-align`; repeatable.
    #[arg(long)]
    ablation: Vec<String>,
    /// `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Analyze { bundle, out } => commands::analyze(&bundle, &out),
        Command::Train { run } => commands::train(&run),
        Command::Eval {
            bundle,
            checkpoint,
            out,
            split,
        } => commands::eval(&bundle, &checkpoint, &out, split.as_deref()),
        Command::AugmentReport {
            bundle,
            checkpoint,
            out,
        } => commands::augment_report(&bundle, &checkpoint, &out),
        Command::Sweep {
            run,
            key,
            values,
            log_grid,
        } => commands::sweep(&run, &key, values.as_deref(), log_grid.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e
                .chain()
                .filter_map(|c| c.downcast_ref::<tailaug::Error>())
                .any(tailaug::Error::is_numeric);
            ExitCode::from(if numeric { 2 } else { 1 })
        }
    }
}

//! `tabrisk` command-line driver.

mod commands;
mod figures;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tabrisk::synthgen::GeneratorKind;

#[derive(Parser)]
#[command(name = "tabrisk", version, about = "Imbalanced tabular risk prediction experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Root seed; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "TABRISK_THREADS")]
    pub threads: Option<usize>,
    /// Output directory; overrides the config value.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: split, tune, cross-validate, train, stress, importance and report.
    Run {
        /// Experiment config document.
        #[arg(long)]
        config: PathBuf,
        /// Skip cross-validation.
        #[arg(long)]
        no_cv: bool,
        /// Also report the two-class Brier sum.
        #[arg(long)]
        brier_multiclass: bool,
    },
    /// Stratified train/test split.
    Split {
        /// Experiment config document.
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a generator on the training positives and sample from it.
    Synth {
        /// Experiment config document.
        #[arg(long)]
        config: PathBuf,
        /// copula, arf, tvae or edge.
        #[arg(long, value_parser = parse_generator)]
        generator: GeneratorKind,
        /// Rows to sample.
        #[arg(long, default_value_t = 500)]
        n: usize,
    },
    /// Train the configured models on one regime of the training split.
    Train {
        /// Experiment config document.
        #[arg(long)]
        config: PathBuf,
        /// Regime name from the config, e.g. `arf_500`.
        #[arg(long, default_value = "none")]
        regime: String,
        /// Take hyperparameters from the tuning section of a report.
        #[arg(long)]
        tuned: Option<PathBuf>,
    },
    /// Score trained models on the test split.
    Evaluate {
        /// Experiment config document.
        #[arg(long)]
        config: PathBuf,
        /// Model bundle written by `train`.
        #[arg(long)]
        models: PathBuf,
        /// Also report the two-class Brier sum.
        #[arg(long)]
        brier_multiclass: bool,
    },
    /// Sample an edge-case cohort and optionally score it.
    Stress {
        /// Cohort size.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Schema document carrying the edge distributions.
        #[arg(long)]
        spec: PathBuf,
        /// Model bundle to score the cohort with.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Permutation importance of trained models on the test split.
    Importance {
        /// Experiment config document.
        #[arg(long)]
        config: PathBuf,
        /// Model bundle written by `train`.
        #[arg(long)]
        models: PathBuf,
        /// Permutations per column; defaults to the config value.
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Regenerate tables and figures from a report.
    Report {
        /// report.json of an earlier run.
        #[arg(long)]
        from: PathBuf,
    },
    /// Rerun an experiment on a subset of columns and list metric changes.
    Retrain {
        /// Experiment config document.
        #[arg(long)]
        config: PathBuf,
        /// Report of the original run.
        #[arg(long)]
        from: PathBuf,
        /// Columns to keep.
        #[arg(long, value_delimiter = ',', conflicts_with = "top")]
        keep: Vec<String>,
        /// Keep the top k columns of a regime's rank table.
        #[arg(long)]
        top: Option<usize>,
        /// Regime whose rank table `--top` reads.
        #[arg(long, default_value = "none")]
        rank_regime: String,
    },
    /// Write the bundled synthetic benchmark.
    BenchData,
}

fn parse_generator(s: &str) -> Result<GeneratorKind, String> {
    GeneratorKind::parse(s).ok_or_else(|| format!("unknown generator `{s}` (copula, arf, tvae, edge)"))
}

/// 2 for input that failed validation, 1 for anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    use tabrisk::Error as E;
    match e.downcast_ref::<tabrisk::Error>() {
        Some(
            E::Config(_)
            | E::Schema(_)
            | E::UnknownColumn(_)
            | E::MissingColumn(_)
            | E::EdgeSpecMissing(_)
            | E::InvalidArgument(_)
            | E::UnmappedCategory { .. }
            | E::NotNumeric { .. }
            | E::NonBinaryTarget { .. }
            | E::RaggedRow { .. },
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let c = &cli.common;
    let result = match cli.command {
        Command::Run {
            config,
            no_cv,
            brier_multiclass,
        } => commands::run(c, &config, no_cv, brier_multiclass),
        Command::Split { config } => commands::split(c, &config),
        Command::Synth { config, generator, n } => commands::synth(c, &config, generator, n),
        Command::Train { config, regime, tuned } => commands::train(c, &config, &regime, tuned.as_deref()),
        Command::Evaluate {
            config,
            models,
            brier_multiclass,
        } => commands::evaluate(c, &config, &models, brier_multiclass),
        Command::Stress { n, spec, models } => commands::stress(c, n, &spec, models.as_deref()),
        Command::Importance { config, models, repeats } => commands::importance(c, &config, &models, repeats),
        Command::Report { from } => commands::report(c, &from),
        Command::Retrain {
            config,
            from,
            keep,
            top,
            rank_regime,
        } => commands::retrain(c, &config, &from, keep, top, &rank_regime),
        Command::BenchData => commands::bench_data(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

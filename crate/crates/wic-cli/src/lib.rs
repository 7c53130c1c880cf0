//! `wic` command-line interface.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::JobConfig;

#[derive(Parser)]
#[command(
    name = "wic",
    version,
    about = "Word-in-context disambiguation: train, predict, ensemble and score"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file with flat keys (training, encoder, paths).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed controlling all randomness (split, init, training order).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a sub-word vocabulary from a corpus file.
    BuildVocab {
        #[command(flatten)]
        common: CommonArgs,
        /// Corpus file (one JSON instance per line).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target vocabulary size.
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Train a model from scratch on labeled instances.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Vocabulary file produced by build-vocab.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// One of: cls, b, b-cls, e, e-cls, entity-pool, entity-first,
        /// entity-last, cls-entity-pool, cls-entity-first, cls-entity-last.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Continue training from a saved checkpoint (few-shot transfer).
    FewShot {
        #[command(flatten)]
        common: CommonArgs,
        /// Source checkpoint to initialise the weights from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Must match the checkpoint's strategy when given.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Score instances with a trained checkpoint.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Mark this run as zero-shot application to another language pair.
        #[arg(long)]
        zero_shot: bool,
        /// Skip untokenizable instances instead of aborting.
        #[arg(long)]
        skip_untokenizable: bool,
    },
    /// Majority-vote several prediction files from different seeds.
    Ensemble {
        #[command(flatten)]
        common: CommonArgs,
        /// Prediction files (one per member model).
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score a predictions file against gold labels.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Language pair code recorded in the evaluation file (e.g. en-en).
        #[arg(long)]
        pair: Option<String>,
    },
    /// Merge per-pair evaluation files into the fixed-order table.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// evaluation.json files produced by `evaluate --pair ...`.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
    },
}

/// Builds the effective job config from defaults, file, and flags.
fn resolve(common: &CommonArgs, apply: impl FnOnce(&mut JobConfig)) -> anyhow::Result<JobConfig> {
    let mut job = JobConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        job.train.seed = seed;
    }
    if let Some(out) = &common.out {
        job.paths.out = Some(out.clone());
    }
    apply(&mut job);
    Ok(job)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::BuildVocab {
            common,
            data,
            vocab_size,
        } => {
            let job = resolve(&common, |job| {
                if let Some(data) = data {
                    job.paths.data = Some(data);
                }
                if let Some(size) = vocab_size {
                    job.encoder.vocab_size = size;
                }
            })?;
            commands::build_vocab(&job)
        }
        Command::Train {
            common,
            data,
            gold,
            vocab,
            strategy,
        } => {
            let strategy = strategy
                .map(|s| wic_core::StrategyKind::from_cli_name(&s))
                .transpose()?;
            let job = resolve(&common, |job| {
                if let Some(data) = data {
                    job.paths.data = Some(data);
                }
                if let Some(gold) = gold {
                    job.paths.gold = Some(gold);
                }
                if let Some(vocab) = vocab {
                    job.paths.vocab = Some(vocab);
                }
                if let Some(strategy) = strategy {
                    job.strategy = Some(strategy);
                }
            })?;
            commands::train_cmd(&job)
        }
        Command::FewShot {
            common,
            init,
            data,
            gold,
            strategy,
        } => {
            let strategy = strategy
                .map(|s| wic_core::StrategyKind::from_cli_name(&s))
                .transpose()?;
            let job = resolve(&common, |job| {
                if let Some(init) = init {
                    job.paths.init = Some(init);
                }
                if let Some(data) = data {
                    job.paths.data = Some(data);
                }
                if let Some(gold) = gold {
                    job.paths.gold = Some(gold);
                }
                if let Some(strategy) = strategy {
                    job.strategy = Some(strategy);
                }
            })?;
            commands::few_shot(&job)
        }
        Command::Predict {
            common,
            checkpoint,
            data,
            zero_shot,
            skip_untokenizable,
        } => {
            let job = resolve(&common, |job| {
                if let Some(checkpoint) = checkpoint {
                    job.paths.checkpoint = Some(checkpoint);
                }
                if let Some(data) = data {
                    job.paths.data = Some(data);
                }
            })?;
            commands::predict_cmd(&job, zero_shot, skip_untokenizable)
        }
        Command::Ensemble { common, inputs } => {
            let job = resolve(&common, |_| {})?;
            commands::ensemble(&job, &inputs)
        }
        Command::Evaluate {
            common,
            predictions,
            gold,
            pair,
        } => {
            let job = resolve(&common, |job| {
                if let Some(gold) = gold {
                    job.paths.gold = Some(gold);
                }
            })?;
            commands::evaluate_cmd(&job, &predictions, pair.as_deref())
        }
        Command::Report { common, inputs } => {
            let job = resolve(&common, |_| {})?;
            commands::report_cmd(&job, &inputs)
        }
    }
}

/// Parses `argv` and runs the selected workflow; returns the process
/// exit code.
pub fn run<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // --help/--version land here with exit code 0.
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

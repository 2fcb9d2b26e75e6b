use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use msuda_core::weighting::WeightMode;

mod commands;
mod config;

use config::{ConfigError, FlagOverrides, Framework, RunConfig};

/// Multi-source domain adaptation for sentiment classification.
#[derive(Parser, Debug)]
#[command(name = "msuda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by commands that resolve a run configuration.
#[derive(Args, Debug)]
struct RunFlags {
    /// TOML configuration; `MSUDA_<SECTION>__<KEY>` variables and flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate K source corpora, a target corpus and its label sidecar.
    Synth {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        docs_per_domain: Option<usize>,
    },
    /// Train a model and write checkpoint, manifest, metrics and report.
    Train {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, value_enum)]
        framework: Option<Framework>,
        /// Target domain name.
        #[arg(long)]
        target: Option<String>,
        /// shared or private.
        #[arg(long)]
        weight_mode: Option<String>,
        /// Earlier `ws` run to start the two-stage framework from.
        #[arg(long)]
        ws_run: Option<PathBuf>,
    },
    /// Score a trained run on a labeled corpus.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Label sidecar; by default labels come from the corpus lines.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Vocabulary file to use instead of the run's own.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        weight_mode: Option<WeightMode>,
        /// Report path (default `<run>/eval.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump per-instance source weights for a corpus.
    Weights {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        weight_mode: Option<WeightMode>,
        /// Output TSV (default `<run>/weights.tsv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(run: &RunFlags, extra: FlagOverrides) -> Result<RunConfig, ConfigError> {
    let flags = FlagOverrides {
        seed: run.seed,
        out: run.out.clone(),
        ..extra
    };
    RunConfig::resolve(run.config.as_deref(), std::env::vars(), &flags)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { run, docs_per_domain } => {
            let mut cfg = resolve(&run, FlagOverrides::default())?;
            if let Some(n) = docs_per_domain {
                cfg.synth.docs_per_domain = n;
            }
            commands::synth(&cfg)
        }
        Command::Train {
            run,
            framework,
            target,
            weight_mode,
            ws_run,
        } => {
            let cfg = resolve(
                &run,
                FlagOverrides {
                    framework,
                    target,
                    weight_mode,
                    ws_run,
                    ..Default::default()
                },
            )?;
            commands::train(&cfg)
        }
        Command::Eval {
            run,
            corpus,
            labels,
            vocab,
            weight_mode,
            out,
        } => commands::eval(&commands::EvalArgs {
            run: &run,
            corpus: &corpus,
            labels: labels.as_deref(),
            vocab: vocab.as_deref(),
            weight_mode,
            out: out.as_deref(),
        }),
        Command::Weights {
            run,
            corpus,
            vocab,
            weight_mode,
            out,
        } => commands::weights(&commands::WeightsArgs {
            run: &run,
            corpus: &corpus,
            vocab: vocab.as_deref(),
            weight_mode,
            out: out.as_deref(),
        }),
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<msuda_core::Error>() {
            use msuda_core::Error as E;
            return match e {
                E::Config(_) => EXIT_CONFIG,
                E::NonFinite { .. } => EXIT_NUMERIC,
                E::Data(_) | E::Parse { .. } | E::Checkpoint(_) | E::Io(_) | E::Json(_) | E::Dimension { .. } => {
                    EXIT_DATA
                }
                E::Contract(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

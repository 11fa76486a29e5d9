use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcgshift::adapt::Method;
use fcgshift::collate::Scheme;

mod commands;
mod config;
mod data;
mod error;
mod manifest;

use commands::{AdaptArgs, EvalArgs, Subset};
use error::CliError;

#[derive(Parser)]
#[command(name = "fcgshift", version, about = "Call-graph malware classification under distribution shift")]
struct Cli {
    /// Worker threads for parallel stages (default: FCGSHIFT_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract node features from a raw corpus into a dataset directory.
    Extract {
        corpus: PathBuf,
        out: PathBuf,
        /// Comma-separated families: meta, llm, ldp.
        #[arg(long)]
        features: Option<String>,
        /// Directory of `<sample_id>.emb` files replacing per-sample embeddings.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Resolve missing feature groups in a dataset.
    Collate {
        input: PathBuf,
        out: PathBuf,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a benchmark split from a corpus index.
    Split {
        /// `index.json`, a dataset directory, or a raw corpus root.
        index: PathBuf,
        spec: PathBuf,
        out: PathBuf,
        /// JSON list of sample ids, or a split whose samples are excluded.
        #[arg(long)]
        exclude: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint directory.
    Train {
        data: PathBuf,
        config: PathBuf,
        out: PathBuf,
        /// Restrict to a split's samples and use its classes.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        ckpt: PathBuf,
        data: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Partition of the training run to score.
        #[arg(long, value_enum, default_value = "all")]
        subset: Subset,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Table row label for `report` (default: checkpoint directory name).
        #[arg(long)]
        row: Option<String>,
        /// Table column label for `report` (default: dataset directory name).
        #[arg(long)]
        col: Option<String>,
    },
    /// Adapt a checkpoint to a target dataset and score it.
    Adapt {
        ckpt: PathBuf,
        data: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        row: Option<String>,
        #[arg(long)]
        col: Option<String>,
    },
    /// Generate a synthetic corpus.
    Synth { config: PathBuf, out: PathBuf },
    /// Tabulate accuracy over eval and adapt runs as `mean_{std}`.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: fcgshift::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: fcgshift::Error| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let w = cli.workers;
    match cli.command {
        Command::Extract { corpus, out, features, embeddings, config } => {
            commands::extract(&corpus, &out, features.as_deref(), embeddings.as_deref(), config.as_deref(), w)
        }
        Command::Collate { input, out, scheme, config } => {
            commands::collate(&input, &out, scheme, config.as_deref(), w)
        }
        Command::Split { index, spec, out, exclude } => {
            commands::init_workers(w, None)?;
            commands::split(&index, &spec, &out, exclude.as_deref())
        }
        Command::Train { data, config, out, split } => commands::train(&data, &config, &out, split.as_deref(), w),
        Command::Eval { ckpt, data, report, subset, split, row, col } => {
            commands::init_workers(w, None)?;
            commands::eval(EvalArgs {
                ckpt: &ckpt,
                data: &data,
                report: report.as_deref(),
                subset,
                split: split.as_deref(),
                row,
                col,
            })
        }
        Command::Adapt { ckpt, data, method, config, out, split, row, col } => commands::adapt(AdaptArgs {
            ckpt: &ckpt,
            data: &data,
            method,
            config: config.as_deref(),
            out: &out,
            split: split.as_deref(),
            row,
            col,
            workers: w,
        }),
        Command::Synth { config, out } => commands::synth(&config, &out, w),
        Command::Report { runs, out } => commands::report(&runs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", CliError::from_anyhow(&e).to_json());
            ExitCode::FAILURE
        }
    }
}

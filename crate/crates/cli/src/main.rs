use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use emoclass::config::RunConfig;
use emoclass::corpus::Split;
use emoclass_cli::commands;

/// Six-way emotion classification: prepare data, train, evaluate, predict.
#[derive(Parser, Debug)]
#[command(name = "emoclass", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Settings given on the command line win over the config file, which wins
/// over built-in defaults.
#[derive(Args, Debug)]
struct Overrides {
    /// Key/value config file (`key = value` per line).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Classifier backend: reference or pretrained-adapter.
    #[arg(long, global = true)]
    backend: Option<String>,

    /// Sequence budget in tokens, special tokens included.
    #[arg(long, global = true)]
    budget: Option<usize>,

    /// Macro averaging mode: macro_all or macro_present.
    #[arg(long, global = true)]
    averaging: Option<String>,

    /// Directory for caches, checkpoints, reports and predictions.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Any config key, e.g. --set epochs=3 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean, reduce and encode the configured splits into feature caches.
    Prepare,
    /// Fine-tune on prepared features and save the best-epoch checkpoint.
    Train,
    /// Score a checkpoint on a labeled split under both averaging modes.
    Evaluate {
        /// Split to score: train, validation or test.
        #[arg(long, default_value = "validation")]
        split: String,
        /// Checkpoint directory (defaults to the one this config trains).
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
    },
    /// Write a one-hot submission file for the test split.
    Predict {
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
        /// Submission path (defaults under <output_dir>/predictions).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Omit the text column.
        #[arg(long)]
        no_text: bool,
        /// Classify one text and print class probabilities instead.
        #[arg(long, value_name = "TEXT")]
        text: Option<String>,
    },
    /// Aggregate histories or metric records from several runs.
    Report {
        /// history.csv files or .kv metric records.
        #[arg(required = true, value_name = "PATH")]
        inputs: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn resolve_config(o: &Overrides) -> Result<RunConfig> {
    let mut config = match &o.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::parse(&text, &path.display().to_string())?
        }
        None => RunConfig::default(),
    };
    for item in &o.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{item}`"))?;
        config.apply(k.trim(), v)?;
    }
    if let Some(seed) = o.seed {
        config.train.seed = seed;
    }
    if let Some(backend) = &o.backend {
        config.apply("backend", backend)?;
    }
    if let Some(budget) = o.budget {
        config.train.sequence_budget = budget;
    }
    if let Some(averaging) = &o.averaging {
        config.apply("averaging", averaging)?;
    }
    if let Some(dir) = &o.output_dir {
        config.output_dir = dir.clone();
    }
    if let Err(e) = config.validate() {
        return Err(anyhow!("{e} (see `emoclass --help`; override with --set KEY=VALUE)"));
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if let Command::Report { inputs, out: path } = &cli.command {
        commands::report(inputs, path.as_deref(), &mut out)?;
        return Ok(());
    }
    let config = resolve_config(&cli.overrides)?;
    log::info!("run config hash {}", config.hash());
    match &cli.command {
        Command::Prepare => {
            commands::prepare(&config, &mut out)?;
        }
        Command::Train => {
            commands::train(&config, &mut out)?;
        }
        Command::Evaluate { split, checkpoint } => {
            let split: Split = split.parse()?;
            commands::evaluate_split(&config, split, checkpoint.as_deref(), &mut out)?;
        }
        Command::Predict { checkpoint, out: path, no_text, text } => match text {
            Some(text) => {
                commands::predict_text(&config, checkpoint.as_deref(), text, &mut out)?;
            }
            None => {
                commands::predict(&config, checkpoint.as_deref(), path.as_deref(), !no_text, &mut out)?;
            }
        },
        Command::Report { .. } => unreachable!("handled above"),
    }
    out.flush()?;
    Ok(())
}

/// The error chain on one line; causes already quoted by their parent's
/// message are skipped.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace(['\n', '\r'], " ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

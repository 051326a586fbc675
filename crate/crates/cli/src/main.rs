mod commands;
mod config;
mod error;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Atomic convolutional networks for protein-ligand binding affinity.
///
/// Settings come from the preset, then `--config`, then `ACNN_<KEY>`
/// environment variables, then `--set` and dedicated flags.
#[derive(Debug, Parser)]
#[command(name = "acnn", version)]
struct Cli {
    /// Run configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = config::parse_pair)]
    set: Vec<(String, String)>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split an index into train and test subsets.
    Split {
        #[arg(long)]
        index: Option<PathBuf>,
        /// random, stratified, scaffold or temporal.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; provenance JSON goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a run directory.
    Train {
        #[arg(long)]
        index: Option<PathBuf>,
        /// Existing `id,subset` CSV; otherwise the configured split is computed.
        #[arg(long)]
        split: Option<PathBuf>,
        /// core or refined.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads, 0 for one per core.
        #[arg(long)]
        threads: Option<usize>,
        /// Serial execution throughout.
        #[arg(long)]
        deterministic: bool,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the subsets of a split file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        /// `id,subset` CSV naming the complexes to evaluate.
        #[arg(long)]
        split: PathBuf,
        /// Output directory for metrics.json and scatter.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the binding free energy of one complex.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        ligand: PathBuf,
        #[arg(long)]
        protein: PathBuf,
    },
    /// Dump pooled per-atom features of one structure as CSV.
    Featurize {
        #[arg(long)]
        structure: PathBuf,
        /// Take atom types and radial filters from a checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn flag_layer(command: &Command) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    match command {
        Command::Split {
            index,
            kind,
            ratio,
            seed,
            ..
        } => {
            put("index", path(index));
            put("split_kind", kind.clone());
            put("ratio", ratio.map(|v| v.to_string()));
            put("split_seed", seed.map(|v| v.to_string()));
        }
        Command::Train {
            index,
            split,
            preset,
            epochs,
            seed,
            threads,
            deterministic,
            ..
        } => {
            put("index", path(index));
            put("split_file", path(split));
            put("preset", preset.clone());
            put("epochs", epochs.map(|v| v.to_string()));
            put("seed", seed.map(|v| v.to_string()));
            put("threads", threads.map(|v| v.to_string()));
            put("deterministic", deterministic.then(|| "true".to_string()));
        }
        Command::Eval { index, .. } => put("index", path(index)),
        Command::Predict { .. } | Command::Featurize { .. } => {}
    }
    m
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut layers = Vec::new();
    if let Some(path) = &cli.config {
        layers.push(config::parse_file(path)?);
    }
    layers.push(config::from_env(std::env::vars()));
    layers.push(cli.set.iter().cloned().collect());
    layers.push(flag_layer(&cli.command));
    let cfg = config::resolve(&layers)?;

    match &cli.command {
        Command::Split { out, .. } => commands::split(&cfg, out),
        Command::Train { out, .. } => commands::train(&cfg, out),
        Command::Eval {
            checkpoint, split, out, ..
        } => commands::eval(&cfg, commands::wants_shape_check(&layers), checkpoint, split, out),
        Command::Predict {
            checkpoint,
            ligand,
            protein,
        } => {
            let value = commands::predict(checkpoint, ligand, protein)?;
            println!("{value}");
            Ok(())
        }
        Command::Featurize {
            structure,
            checkpoint,
            out,
        } => {
            let csv = commands::featurize(&cfg, structure, checkpoint.as_deref())?;
            match out {
                Some(path) => std::fs::write(path, csv).map_err(|e| CliError::io(path, e)),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

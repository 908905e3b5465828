//! `hgconv`: graph inference, coarsening, training and evaluation from the shell.
//!
//! Exit status: 0 on success, 1 for usage and validation errors, 2 when a
//! valid request fails while running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable naming the directory relative output paths live under.
pub const OUT_ROOT_ENV: &str = "HGCONV_OUT_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hgconv_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "hgconv", version, about = "Correlation graphs and Chebyshev graph convolution on node signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat JSON file of settings (a run manifest also works); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, resolved against $HGCONV_OUT_ROOT when relative.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Write into an existing, non-empty output location.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Chebyshev polynomial order (kernel size).
    #[arg(long)]
    pub k: Option<usize>,
    /// Output channels of the three conv layers, e.g. 32,64,128.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub fc_width: Option<usize>,
    #[arg(long)]
    pub dropout_keep: Option<f64>,
    /// combinatorial or normalized.
    #[arg(long)]
    pub laplacian: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// adam or sgd_momentum.
    #[arg(long)]
    pub optimizer: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Correlation graph of a signal matrix.
    InferGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        signals: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Write the edge list to this file instead of <out-dir>/edges.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also export the dense correlation and adjacency matrices.
        #[arg(long)]
        dense: bool,
    },
    /// Pooling hierarchy of an edge-list graph.
    Coarsen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Node count when trailing nodes have no edges.
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model on a labelled dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        signals: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Fixed edge-list graph; inferred from the signals when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Repeated stratified k-fold evaluation.
    CrossValidate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        signals: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// inferred, empty, random or fixed.
        #[arg(long)]
        graph_mode: Option<String>,
        /// Edge list for --graph-mode fixed.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Classify subjects with a trained model.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        signals: Option<PathBuf>,
        /// Optional labels; adds accuracy to the summary.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Planted-community synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        /// Community sizes, e.g. 30,30,30,30.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        blocks: Option<Vec<usize>>,
        #[arg(long)]
        strength: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        /// Mean shift of class c on community c.
        #[arg(long, allow_hyphen_values = true)]
        offset: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time the Chebyshev filter against the dense eigenbasis filter.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_delimiter = ',', num_args = 1)]
        densities: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Largest n for which the dense path runs.
        #[arg(long)]
        exact_limit: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::InferGraph {
            common,
            signals,
            threshold,
            out,
            dense,
        } => infer_graph(&common, signals, threshold, out, dense),
        Command::Coarsen {
            common,
            edges,
            nodes,
            levels,
            seed,
        } => coarsen(&common, edges, nodes, levels, seed),
        Command::Train {
            common,
            signals,
            labels,
            graph,
            threshold,
            seed,
            model,
        } => train(&common, signals, labels, graph, threshold, seed, &model),
        Command::CrossValidate {
            common,
            signals,
            labels,
            folds,
            repeats,
            graph_mode,
            graph,
            threshold,
            jobs,
            seed,
            model,
        } => cross_validate(
            &common,
            CvArgs {
                signals,
                labels,
                folds,
                repeats,
                graph_mode,
                graph,
                threshold,
                jobs,
                seed,
            },
            &model,
        ),
        Command::Predict {
            common,
            model,
            signals,
            labels,
        } => predict(&common, model, signals, labels),
        Command::Synth {
            common,
            nodes,
            per_class,
            classes,
            blocks,
            strength,
            noise,
            offset,
            seed,
        } => synth(
            &common,
            SynthArgs {
                nodes,
                per_class,
                classes,
                blocks,
                strength,
                noise,
                offset,
                seed,
            },
        ),
        Command::Benchmark {
            common,
            n,
            k,
            densities,
            repeats,
            exact_limit,
            seed,
        } => benchmark(&common, n, k, densities, repeats, exact_limit, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

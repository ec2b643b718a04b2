use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "corenet", version, about = "Cooperative regressor networks for blind radar signal restoration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the commands that read a run config.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset size relative to the full benchmark, in (0, 1].
    #[arg(long = "toy-scale")]
    pub toy_scale: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a paired clean/corrupted dataset.
    Synth(ConfigArgs),
    /// Run one cooperative training pass.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory; synthesized from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run progressive transfer learning over several passes.
    Ptl {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of passes, overriding the config.
        #[arg(long)]
        passes: Option<usize>,
        /// Keep restored datasets in memory only (their digests still go in the chain).
        #[arg(long)]
        no_datasets: bool,
    },
    /// Restore a dataset with one checkpoint or a chain of them.
    Restore {
        /// Checkpoints applied in order.
        #[arg(long, conflicts_with = "chain")]
        checkpoint: Vec<PathBuf>,
        /// chain.json of a transfer run; applies every pass's best checkpoint.
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// Score restored signals against a reference dataset.
    Eval {
        #[arg(long)]
        reference: PathBuf,
        /// Restored dataset; scores the reference's corrupted signals when absent.
        #[arg(long)]
        restored: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Pass index recorded in the report.
        #[arg(long)]
        pass: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an SVG plot from a CSV table written by this tool.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

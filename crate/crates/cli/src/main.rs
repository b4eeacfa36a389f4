//! `vigxray`: initialize weights, analyze images, aggregate metrics and
//! render connection heatmaps.

mod aggregate;
mod analyze;
mod error;
mod heatmap;
mod init;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "vigxray",
    version,
    about = "Layer-wise graph inspection for isotropic Vision GNNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random weights file.
    InitWeights(InitArgs),
    /// Run the model on images and write traces and per-layer metrics.
    Analyze(AnalyzeArgs),
    /// Average per-image metric files into a layer-group table.
    Aggregate(AggregateArgs),
    /// Render neighbor heatmaps for one patch.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
pub struct InitArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hidden dimension D.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Number of blocks L.
    #[arg(long, default_value_t = 16)]
    pub layers: usize,
    /// Number of classes C.
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Neighbors per node.
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    /// Neighbors at the last layer; enables a linear schedule from --k.
    #[arg(long)]
    pub k_end: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, default_value_t = 4)]
    pub ffn_ratio: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Printed,
    LeichtNewman,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum NormalizationArg {
    MinMax,
    Absolute,
}

/// Neighbor-count overrides applied on top of the weights' config.
#[derive(Args, Clone)]
pub struct NeighborArgs {
    /// Override the neighbor count.
    #[arg(long)]
    pub k: Option<usize>,
    /// Override the schedule end; `0` disables the schedule.
    #[arg(long)]
    pub k_end: Option<usize>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    pub image: Option<PathBuf>,
    /// Lines of `image [label] [mask]`; `-` skips a field, `#` starts a comment.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub weights: PathBuf,
    /// Object mask (224×224 or 14×14; PNG, PNM or 0/1 text grid).
    #[arg(long, conflicts_with = "manifest")]
    pub mask: Option<PathBuf>,
    /// Ground-truth class index.
    #[arg(long, conflicts_with = "manifest")]
    pub label: Option<usize>,
    /// Output file stem for a single image (defaults to the image file stem).
    #[arg(long, conflicts_with = "manifest")]
    pub id: Option<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Skip writing trace files.
    #[arg(long)]
    pub no_trace: bool,
    /// Omit node features from trace files.
    #[arg(long)]
    pub no_features: bool,
    /// Fraction of object pixels for a patch to count as object.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "printed")]
    pub modularity_variant: VariantArg,
    #[command(flatten)]
    pub neighbors: NeighborArgs,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "VIGXRAY_THREADS", default_value_t = 0)]
    pub jobs: usize,
    /// One class name per line, used for display only.
    #[arg(long)]
    pub classes_file: Option<PathBuf>,
}

#[derive(Args)]
pub struct AggregateArgs {
    /// Directory holding `*.metrics.csv` files.
    #[arg(long)]
    pub input_dir: PathBuf,
    /// Output CSV (defaults to `<input-dir>/aggregate.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One row per layer instead of per layer pair.
    #[arg(long)]
    pub single_layer: bool,
}

#[derive(Args)]
pub struct HeatmapArgs {
    /// Image the trace was computed from; also the overlay background.
    #[arg(long)]
    pub image: PathBuf,
    /// Precomputed trace; otherwise --weights runs the model.
    #[arg(long, required_unless_present = "weights", conflicts_with = "weights")]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Selected patch as `row,col` or a flat index.
    #[arg(long)]
    pub patch: String,
    /// Comma-separated layers, 1-based.
    #[arg(long, value_delimiter = ',', required = true)]
    pub layers: Vec<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Output file prefix (defaults to the image file stem).
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub scale: usize,
    #[arg(long, default_value_t = 0.25)]
    pub alpha_floor: f64,
    #[arg(long, default_value_t = 0.9)]
    pub alpha_ceiling: f64,
    #[arg(long, value_enum, default_value = "min-max")]
    pub normalization: NormalizationArg,
    /// Also write `<id>_curves.csv` and `<id>_curves.png`.
    #[arg(long)]
    pub curves: bool,
    #[command(flatten)]
    pub neighbors: NeighborArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::InitWeights(a) => init::run(&a),
        Command::Analyze(a) => analyze::run(&a),
        Command::Aggregate(a) => aggregate::run(&a),
        Command::Heatmap(a) => heatmap::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

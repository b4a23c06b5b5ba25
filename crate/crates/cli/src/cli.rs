use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ordinal_depth::sampling::Strategy;
use ordinal_depth::train::Objective;

#[derive(Debug, Parser)]
#[command(name = "odepth", version, about = "Depth from ordinal annotations")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic scenes with exact depth.
    Synth(SynthArgs),
    /// Sample and label point pairs from depth maps.
    Sample(SampleArgs),
    /// Train the hourglass network.
    Train(TrainArgs),
    /// Write raw score maps for a directory of images.
    Predict(PredictArgs),
    /// Evaluate score maps against pairs and optional ground-truth depth.
    Eval(EvalArgs),
    /// Run the annotation protocol with synthetic workers.
    Simulate(SimulateArgs),
    /// Serve annotation tasks over HTTP.
    Serve(ServeArgs),
    /// Write accepted annotations from an event journal as a pair file.
    Export(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Unconstrained,
    Symmetric,
    DistanceConstrained,
    Mixed,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Unconstrained => Strategy::Unconstrained,
            StrategyArg::Symmetric => Strategy::Symmetric,
            StrategyArg::DistanceConstrained => Strategy::DistanceConstrained,
            StrategyArg::Mixed => Strategy::Mixed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Ranking,
    FullDepth,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Ranking => Objective::Ranking,
            ObjectiveArg::FullDepth => Objective::FullDepth,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Receives `images/`, `depth/` and `manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of `<id>.depth` rasters, all the same size.
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub per_image: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub equal_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of `<id>.png` training images.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Directory of `<id>.depth` rasters for full-depth training.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of `<id>.depth` score maps, larger meaning closer.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Directory of ground-truth `<id>.depth` rasters.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Fixed threshold instead of calibration.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value = "metrics")]
    pub stem: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub error: f64,
    #[arg(long, default_value_t = 0.0)]
    pub hard: f64,
    #[arg(long, default_value_t = 20)]
    pub workers: usize,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 200)]
    pub gold_tasks: usize,
    #[arg(long)]
    pub p_gold: Option<f64>,
    /// Disable gold-standard rejection.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the event journal here.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of `<id>.png` images to annotate.
    #[arg(long)]
    pub images: PathBuf,
    /// Gold bank: pair file with a `verified` column.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Event journal; replayed when it exists, created otherwise.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, value_enum, default_value = "mixed")]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub p_gold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

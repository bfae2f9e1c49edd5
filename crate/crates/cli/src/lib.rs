//! The `hintcolor` command: dataset building, training, evaluation, batch
//! inference and the HTTP service.
//!
//! Exit codes: 0 success, 1 user or configuration error, 2 internal error.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hintcolor::dataset::{CannyParams, HintParams, DEFAULT_CUT_THRESHOLD};
use hintcolor::image::InputMode;
use hintcolor::losses::LossWeights;
use hintcolor::model::{DiscriminatorConfig, GeneratorConfig};
use hintcolor::training::{ExtractorConfig, TrainConfig};
use hintcolor_service::DEFAULT_PATCH_SIZE;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<hintcolor::Error> for CliError {
    fn from(e: hintcolor::Error) -> Self {
        if e.is_user_error() {
            Self::user(e.to_string())
        } else {
            Self::internal(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hintcolor", version, about = "Hint-guided, temporally coherent line-art colorization")]
pub struct Cli {
    /// Seed for hint sampling and training.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// JSON object whose keys override the subcommand's settings.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a training set from a directory of colour frames.
    Dataset(DatasetArgs),
    /// Train the generator and discriminator.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset (SSIM, PSNR, FID).
    Eval(EvalArgs),
    /// Colorize a line-art sequence.
    Infer(InferArgs),
    /// Run the HTTP colorization service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Directory of colour PNG frames, in file-name order.
    pub frames_dir: PathBuf,

    /// Output directory for manifest.json, index.json and samples/.
    #[arg(long)]
    pub out: PathBuf,

    /// Structural input: line_art or greyscale.
    #[arg(long, default_value_t = InputMode::LineArt)]
    pub mode: InputMode,

    /// Canny Gaussian sigma.
    #[arg(long, default_value_t = CannyParams::default().gaussian_sigma)]
    pub canny_sigma: f64,

    /// Canny low threshold, as a fraction of the maximum gradient.
    #[arg(long, default_value_t = CannyParams::default().low_threshold)]
    pub canny_low: f64,

    /// Canny high threshold, as a fraction of the maximum gradient.
    #[arg(long, default_value_t = CannyParams::default().high_threshold)]
    pub canny_high: f64,

    /// Hint cell side in pixels.
    #[arg(long, default_value_t = HintParams::default().patch_size)]
    pub patch_size: usize,

    /// Fraction of hint cells revealed per frame.
    #[arg(long, default_value_t = HintParams::default().reveal_fraction)]
    pub reveal_fraction: f64,

    /// Mean absolute frame difference above which a new scene starts.
    #[arg(long, default_value_t = DEFAULT_CUT_THRESHOLD)]
    pub cut_threshold: f64,

    /// Explicit scene-start frame indices (comma separated); disables detection.
    #[arg(long, value_delimiter = ',')]
    pub scene_cuts: Option<Vec<usize>>,
}

/// Feature extractor selection shared by train and eval.
#[derive(Debug, Args)]
pub struct ExtractorArgs {
    /// Pretrained VGG-19 weights (safetensors, torchvision names).
    #[arg(long, value_name = "FILE", conflicts_with = "toy_extractor")]
    pub vgg19: Option<PathBuf>,

    /// Use the seeded toy extractor instead of VGG-19.
    #[arg(long, value_name = "SEED")]
    pub toy_extractor: Option<u64>,
}

impl ExtractorArgs {
    pub fn config(&self) -> Option<ExtractorConfig> {
        match (&self.vgg19, self.toy_extractor) {
            (Some(path), _) => Some(ExtractorConfig::Vgg19 { path: path.clone() }),
            (None, Some(seed)) => Some(ExtractorConfig::Toy { seed }),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest, or the directory holding manifest.json.
    pub manifest: PathBuf,

    /// Checkpoint root; also receives train_log.jsonl.
    #[arg(long)]
    pub out: PathBuf,

    /// Override the manifest's input mode.
    #[arg(long)]
    pub mode: Option<InputMode>,

    /// Total optimisation steps.
    #[arg(long, default_value_t = TrainConfig::default().max_steps)]
    pub max_steps: u64,

    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,

    /// Generator learning rate.
    #[arg(long, default_value_t = TrainConfig::default().lr_g)]
    pub lr_g: f64,

    /// Discriminator learning rate.
    #[arg(long, default_value_t = TrainConfig::default().lr_d)]
    pub lr_d: f64,

    /// Steps between checkpoints; 0 writes only the final one.
    #[arg(long, default_value_t = TrainConfig::default().checkpoint_every)]
    pub checkpoint_every: u64,

    #[arg(long, default_value_t = LossWeights::default().lambda_adv)]
    pub lambda_adv: f64,

    #[arg(long, default_value_t = LossWeights::default().lambda_cont)]
    pub lambda_cont: f64,

    #[arg(long, default_value_t = LossWeights::default().lambda_style)]
    pub lambda_style: f64,

    #[arg(long, default_value_t = LossWeights::default().lambda_l1)]
    pub lambda_l1: f64,

    /// Generator base width.
    #[arg(long, default_value_t = GeneratorConfig::default().base_channels)]
    pub g_base: usize,

    /// Generator residual blocks.
    #[arg(long, default_value_t = GeneratorConfig::default().n_residual_blocks)]
    pub g_blocks: usize,

    /// Discriminator base width.
    #[arg(long, default_value_t = DiscriminatorConfig::default().base_channels)]
    pub d_base: usize,

    /// Discriminator stride-2 layers.
    #[arg(long, default_value_t = DiscriminatorConfig::default().n_layers)]
    pub d_layers: usize,

    /// Continue from a checkpoint directory or root.
    #[arg(long, value_name = "CHECKPOINT")]
    pub resume: Option<PathBuf>,

    #[command(flatten)]
    pub extractor: ExtractorArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest, or the directory holding manifest.json.
    pub manifest: PathBuf,

    /// Checkpoint directory or root. Not needed with --oracle-identity.
    #[arg(long, required_unless_present = "oracle_identity")]
    pub checkpoint: Option<PathBuf>,

    /// Score ground truth against itself.
    #[arg(long)]
    pub oracle_identity: bool,

    /// Write the full report as JSON.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Layer pooled into FID features.
    #[arg(long, default_value = "relu3_1")]
    pub fid_layer: String,

    #[command(flatten)]
    pub extractor: ExtractorArgs,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Directory of line-art PNG frames, in file-name order.
    pub line_art_dir: PathBuf,

    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Output directory for frame_0000.png, frame_0001.png, ...
    #[arg(long)]
    pub out: PathBuf,

    /// JSON object mapping frame index to a list of {"x","y","rgb"} placements.
    #[arg(long, value_name = "FILE")]
    pub hints: Option<PathBuf>,

    /// Frame indices that start a new scene (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub scene_cuts: Vec<usize>,

    /// Hint cell side in pixels.
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    pub patch_size: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,

    /// Idle session lifetime in seconds.
    #[arg(long, default_value_t = hintcolor_service::DEFAULT_TTL.as_secs())]
    pub ttl_secs: u64,

    /// Hint cell side in pixels.
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    pub patch_size: usize,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = cli.config.as_deref().map(config::load_overrides).transpose()?;
    let overrides = overrides.as_ref();
    match cli.command {
        Command::Dataset(a) => commands::dataset::run(a, cli.seed, overrides),
        Command::Train(a) => commands::train::run(a, cli.seed, overrides),
        Command::Eval(a) => commands::eval::run(a, overrides),
        Command::Infer(a) => commands::infer::run(a, overrides),
        Command::Serve(a) => commands::serve::run(a, overrides),
    }
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser, Serialize)]
#[command(name = "geoalign", version, about = "Sample generation, prompt rendering and scoring for RGB-based 3D perception")]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "GEOALIGN_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate prompted-pixel point/label samples from scene packs.
    GenSparse(GenSparseArgs),
    /// Score 3D grounding boxes (Acc@0.25/0.5) and optional anchor frames.
    EvalGrounding(EvalGroundingArgs),
    /// Score 3D detections (precision/recall/F1 at an IoU threshold).
    EvalDetection(EvalDetectionArgs),
    /// Score dense captions (CIDEr, BLEU-4, ROUGE-L gated on box IoU).
    EvalCaption(EvalCaptionArgs),
    /// Score predicted point sets (accuracy/completeness/overall).
    EvalPointmap(EvalPointmapArgs),
    /// Run the reference fusion stack on random tokens, optionally gradient-checked.
    FusionDemo(FusionDemoArgs),
    /// Render task prompts from payload records.
    PromptEmit(PromptEmitArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenSparse(_) => "gen-sparse",
            Command::EvalGrounding(_) => "eval-grounding",
            Command::EvalDetection(_) => "eval-detection",
            Command::EvalCaption(_) => "eval-caption",
            Command::EvalPointmap(_) => "eval-pointmap",
            Command::FusionDemo(_) => "fusion-demo",
            Command::PromptEmit(_) => "prompt-emit",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenSparseArgs {
    /// Directory of scene packs (or a single pack).
    #[arg(long)]
    pub scenes: PathBuf,
    /// JSON file mapping scene id to world-space object annotations.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output JSON-lines file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 4)]
    pub window: usize,
    /// Depth-consistency band for visibility, meters.
    #[arg(long, default_value_t = geoalign::sparse::DEFAULT_VISIBILITY_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1)]
    pub samples_per_window: usize,
    /// Write the marked frame of every sample as `<sample_id>.png` here.
    #[arg(long)]
    pub render_dir: Option<PathBuf>,
    /// Per-scene accounting report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalGroundingArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalDetectionArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub iou: f64,
    /// Text file with one class name per line.
    #[arg(long)]
    pub classes: PathBuf,
    /// Score malformed entries as unmatched predictions instead of dropping them.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalCaptionArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou_gate: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MedianMode {
    /// Per-scene medians averaged over scenes.
    PerScene,
    /// Median of all distances pooled across scenes.
    Pooled,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Aligned,
    Metric,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalPointmapArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Aligned)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = MedianMode::PerScene)]
    pub median: MedianMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FusionDemoArgs {
    /// JSON configuration (see README).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub grad_check: bool,
    /// Write `<prefix>.json` (manifest) and `<prefix>.bin` (f64 buffer).
    #[arg(long)]
    pub save_params: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PromptEmitArgs {
    /// JSON-lines with `sample_id`, optional `task` and `payload`.
    #[arg(long)]
    pub input: PathBuf,
    /// Task for records that do not name one.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

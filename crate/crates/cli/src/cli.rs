use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "teleqa", version, about = "Retrainable video quality pipeline for teleoperation footage")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on worker threads for per-asset work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest; defaults to `<output>.run.json`.
    #[arg(long, global = true)]
    pub run_manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode the missing compression levels of every scene.
    Prepare(PrepareArgs),
    /// Extract perceptual features for every compressed asset.
    Features(FeaturesArgs),
    /// Elementary metrics (PSNR, SSIM, MS-SSIM) for one clip pair.
    Metrics(MetricsArgs),
    /// Scene-disjoint, category-stratified train/validation split.
    Split(SplitArgs),
    /// Fit the fusion model on the training scenes.
    Train(TrainArgs),
    /// Predict quality scores from extracted features.
    Predict(PredictArgs),
    /// Compare predictions against subjective scores.
    Evaluate(EvaluateArgs),
    /// Statistical analysis of a rating export.
    Analyze(AnalyzeArgs),
    /// Run the study HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PrepareArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Encoder command with {input}, {output} and {crf} placeholders.
    #[arg(long)]
    pub encoder: Option<String>,
    /// Decoder command with {input} and {output} placeholders, producing Y4M.
    #[arg(long, conflicts_with = "no_decode")]
    pub decoder: Option<String>,
    /// Skip the decode pass; features then read the encoded files directly.
    #[arg(long)]
    pub no_decode: bool,
    /// Directory for encoded files.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Extension of encoded files.
    #[arg(long)]
    pub extension: Option<String>,
    /// Updated manifest path; defaults to rewriting the input manifest.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub media_root: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Recompute even when inputs are unchanged.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub distorted: PathBuf,
    /// Geometry for raw YUV inputs, as WIDTHxHEIGHT.
    #[arg(long)]
    pub size: Option<String>,
    /// Frame rate for raw YUV inputs, as NUM/DEN or an integer.
    #[arg(long)]
    pub fps: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fraction of scenes per category assigned to training.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LabelArgs {
    /// Rating export CSV.
    #[arg(long)]
    pub ratings: PathBuf,
    /// Object-check export CSV used to screen participants.
    #[arg(long)]
    pub object_checks: Option<PathBuf>,
    #[arg(long)]
    pub min_raters: Option<usize>,
    #[arg(long)]
    pub max_object_failures: Option<f64>,
    /// Label with differential MOS against the hidden reference.
    #[arg(long)]
    pub dmos: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory written by `features`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    /// Number of scene-disjoint folds for the hyperparameter search.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Validation report path; defaults to `<out>.validation.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    Train,
    Val,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub features: PathBuf,
    /// Model file; the built-in baseline model is used when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Restrict to one side of a split.
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,
    #[arg(long, required_if_eq_any = [("subset", "train"), ("subset", "val")])]
    pub split: Option<PathBuf>,
    /// Prediction CSV (asset_id, prediction).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Predictions of a reference model to compare against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
    /// Restrict labels to one side of a split.
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,
    #[arg(long, required_if_eq_any = [("subset", "train"), ("subset", "val")])]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub outliers: Option<usize>,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Residual CSV (asset_id, mos, prediction, residual, category, crf).
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// Whitespace-separated `mos prediction` columns for plotting tools.
    #[arg(long)]
    pub plot_columns: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also print the human-readable tables.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    /// Study service configuration (TOML).
    #[arg(long)]
    pub study_config: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

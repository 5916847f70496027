use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pcst",
    version,
    about = "Patch-craft target synthesis and verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render clean bursts (or read them) and add synthetic noise.
    Synth(SynthArgs),
    /// Build patch-craft targets for burst frames and record them in a manifest.
    Craft(CraftArgs),
    /// Compute the input/residual covariance of every manifest pair.
    Cov(ManifestArgs),
    /// Pick the left-tail cutoff from the covariance histogram.
    Threshold(ThresholdArgs),
    /// Mark manifest pairs as retained or dropped.
    Filter(FilterArgs),
    /// Train the miniature denoiser on manifest pairs.
    Train(TrainArgs),
    /// Report PSNR of a trained model on noisy/clean pairs.
    Eval(EvalArgs),
    /// Compare averaged noisy-target gradients with the clean-target gradient.
    Lemma1(Lemma1Args),
    /// Run the numerical verification checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Noise standard deviation (8-bit scale).
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    /// Side of the flat correlation kernel; 1 gives white noise.
    #[arg(long, default_value_t = 3, conflicts_with = "theta")]
    pub kernel_size: usize,
    /// Use bilinear-decay noise with this correlation width instead.
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Read clean frames from this directory instead of rendering scenes.
    /// Each subdirectory is one burst; a directory without subdirectories is one burst.
    #[arg(long)]
    pub clean_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    #[arg(long, default_value_t = 4)]
    pub frames: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Camera speed in pixels per frame.
    #[arg(long, default_value_t = 1.0)]
    pub motion: f64,
    /// Every this many scenes, use `--fast-motion` instead (0 disables).
    #[arg(long, default_value_t = 0)]
    pub fast_every: usize,
    #[arg(long, default_value_t = 9.0)]
    pub fast_motion: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CraftArgs {
    /// Directory holding `noisy_<i>` frames; may be repeated.
    #[arg(long, required = true, num_args = 1..)]
    pub burst_dir: Vec<PathBuf>,
    /// Frame index to use as input, or `all`.
    #[arg(long, default_value = "all")]
    pub input_index: String,
    /// Patch side; defaults to the table entry for `--sigma` and `--kernel-size`.
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long, default_value_t = pcst::craft::DEFAULT_SEARCH_BOX)]
    pub search_box: usize,
    #[arg(long, default_value_t = 1)]
    pub knn: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest to update; defaults to `<out>/manifest.jsonl`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the histogram as `bin_center,count` CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cutoff to apply, or `none` to keep everything; computed when omitted.
    #[arg(long, allow_hyphen_values = true)]
    pub s_min: Option<String>,
    /// Where to write the updated manifest; defaults to overwriting the input.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub crop: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub crops_per_pair: Option<usize>,
    #[arg(long)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub halve_every: Option<usize>,
    /// Train on every pair regardless of the retained flag.
    #[arg(long)]
    pub ignore_filter: bool,
    /// Model directory (header.json, layer1.pcrf, layer2.pcrf).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory of `noisy_<i>`/`clean_<i>` pairs, searched one level deep.
    #[arg(long)]
    pub pairs_dir: PathBuf,
    /// Per-pair PSNR CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Lemma1Args {
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 12)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub filters: usize,
    /// Input noise level.
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    /// Target noise level.
    #[arg(long, default_value_t = 25.0)]
    pub target_sigma: f64,
    /// Mean of the target noise; nonzero runs the biased control, which
    /// passes when the deviation is detected.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub bias: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Rho,
    Bound,
    Lemma11,
    Delta,
    Syr,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub check: Check,
    /// Largest patch side; per-check default when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// Per-configuration results as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Monte Carlo trials for `delta`.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Pairs for the independent `syr` scenario.
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    /// Pairs for each dependent `syr` scenario.
    #[arg(long, default_value_t = 4_000)]
    pub dependent_pairs: usize,
    /// Field side for `syr`.
    #[arg(long, default_value_t = 256)]
    pub side: usize,
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

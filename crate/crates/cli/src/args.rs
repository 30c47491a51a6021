use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RidgeMode;

/// Space-variant defocus deblurring and its supporting tools.
#[derive(Debug, Parser)]
#[command(name = "defocus", version)]
pub struct Cli {
    /// TOML file with `key = value` defaults; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads, 0 uses every core
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Seed for every random draw
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Restore an image with a per-patch PSF chosen from its blur map
    Deblur(DeblurArgs),
    /// Write the per-pixel blur map as a 16-bit grayscale PNG
    BlurMap(BlurMapArgs),
    /// Estimate one kernel per patch from a registered sharp/blurry pair
    EstimateKernels(EstimateArgs),
    /// Average kernel maps into a blur-indexed lookup table
    BuildLut(BuildLutArgs),
    /// Register a focal stack and fuse its sharpest patches
    FuseStack(FuseArgs),
    /// Degrade an image (or a generated texture) with depth-varying Gaussian blur
    Synth(SynthArgs),
    /// Print MSE and PSNR between two images
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Patch side in pixels
    #[arg(long)]
    pub patch: Option<usize>,
    /// Distance between patch origins in pixels
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gaussian,
    Lut,
}

#[derive(Debug, Args)]
pub struct DeblurArgs {
    /// PSF model
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Kernel lookup table (required by the lut method)
    #[arg(long, value_name = "PATH")]
    pub lut: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Wiener regularization weight
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Gaussian sigma per unit of blur level
    #[arg(long)]
    pub sigma_scale: Option<f64>,
    /// Patches blurrier than this are left untouched
    #[arg(long)]
    pub max_blur: Option<f64>,
    /// Also write blur maps of the input and the result into DIR
    #[arg(long, value_name = "DIR")]
    pub emit_blurmaps: Option<PathBuf>,
    /// Blurry image (PNG or TIFF)
    pub input: PathBuf,
    /// Restored image, same bit depth as the input
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BlurMapArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Per-patch scores as CSV (x,y,blur)
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Image to score
    pub input: PathBuf,
    /// Blur map PNG
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Side of the estimated kernels (odd)
    #[arg(long)]
    pub kernel_size: Option<usize>,
    /// Ridge weight of the estimator
    #[arg(long)]
    pub lambda_k: Option<f64>,
    /// How lambda-k is applied
    #[arg(long, value_enum)]
    pub ridge: Option<RidgeMode>,
    /// Also write the kernels as an image, ordered by blur
    #[arg(long, value_name = "PNG")]
    pub montage: Option<PathBuf>,
    /// All-in-focus reference
    pub sharp: PathBuf,
    /// Registered blurry image
    pub blurry: PathBuf,
    /// Kernel-map JSON
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildLutArgs {
    /// Number of blur bins
    #[arg(long)]
    pub bins: Option<usize>,
    /// Where to write the table
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Kernel-map JSON files
    #[arg(required = true, value_name = "MAP")]
    pub maps: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Where to write the fused image
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Registration reference, defaults to the middle frame
    #[arg(long)]
    pub ref_index: Option<usize>,
    /// Per-patch winning frame as CSV (x,y,index,blur)
    #[arg(long, value_name = "CSV")]
    pub emit_selection: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Focal stack frames, all the same size
    #[arg(required = true, value_name = "IMG")]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Sharp source image
    #[arg(long, value_name = "PATH", conflicts_with = "texture", required_unless_present = "texture")]
    pub input: Option<PathBuf>,
    /// Generate a seeded noise texture of this size instead, e.g. 512x512
    #[arg(long, value_name = "WxH", value_parser = parse_size)]
    pub texture: Option<(usize, usize)>,
    /// Gaussian smoothing of the generated texture
    #[arg(long, default_value_t = 0.0, requires = "texture")]
    pub smoothing: f64,
    /// Uniform blur sigma
    #[arg(long, conflicts_with_all = ["sigma_from", "sigma_to"])]
    pub sigma: Option<f64>,
    /// Sigma at the left edge of a left-to-right ramp
    #[arg(long, requires = "sigma_to")]
    pub sigma_from: Option<f64>,
    /// Sigma at the right edge of a left-to-right ramp
    #[arg(long, requires = "sigma_from")]
    pub sigma_to: Option<f64>,
    /// Standard deviation of additive Gaussian noise
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Patch side of the blur steps
    #[arg(long)]
    pub patch: Option<usize>,
    /// Per-patch true sigma as CSV (x,y,sigma)
    #[arg(long, value_name = "CSV")]
    pub sidecar: Option<PathBuf>,
    /// Bit depth of the output when generating a texture
    #[arg(long, value_parser = ["8", "16"], default_value = "16")]
    pub depth: String,
    /// Degraded image
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// First image
    pub a: PathBuf,
    /// Second image, same size
    pub b: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in '{s}'"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in '{s}'"))?;
    if w == 0 || h == 0 {
        return Err("texture sides must be positive".into());
    }
    Ok((w, h))
}

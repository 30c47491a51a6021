//! Run configuration: built-in defaults, then an optional TOML file, then flags.

use std::path::Path;

use defocus::estimate::{Ridge, DEFAULT_KERNEL_SIZE, DEFAULT_LAMBDA_K};
use defocus::image::MAX_KERNEL_SIZE;
use defocus::patch::{DEFAULT_PATCH, DEFAULT_STRIDE};
use defocus::psf::{DEFAULT_LUT_BINS, DEFAULT_SIGMA_SCALE};
use defocus::restore::DEFAULT_LAMBDA_W;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RidgeMode {
    /// lambda_k is scaled by the peak power of the sharp patch spectrum
    Relative,
    /// lambda_k is used as is
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub patch_size: usize,
    pub stride: usize,
    pub lambda_w: f64,
    pub lambda_k: f64,
    pub ridge: RidgeMode,
    pub sigma_scale: f64,
    pub kernel_size: usize,
    pub lut_bins: usize,
    pub max_blur: f64,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_PATCH,
            stride: DEFAULT_STRIDE,
            lambda_w: DEFAULT_LAMBDA_W,
            lambda_k: DEFAULT_LAMBDA_K,
            ridge: RidgeMode::Relative,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            kernel_size: DEFAULT_KERNEL_SIZE,
            lut_bins: DEFAULT_LUT_BINS,
            max_blur: 1.0,
            seed: 0,
        }
    }
}

/// Keys accepted in a config file; all optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    patch_size: Option<usize>,
    stride: Option<usize>,
    lambda_w: Option<f64>,
    lambda_k: Option<f64>,
    ridge: Option<RidgeMode>,
    sigma_scale: Option<f64>,
    kernel_size: Option<usize>,
    lut_bins: Option<usize>,
    max_blur: Option<f64>,
    seed: Option<u64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        Self::parse(&text).map_err(|msg| CliError::Usage(format!("{}: {msg}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| e.message().to_string())?;
        let d = Config::default();
        Ok(Config {
            patch_size: file.patch_size.unwrap_or(d.patch_size),
            stride: file.stride.unwrap_or(d.stride),
            lambda_w: file.lambda_w.unwrap_or(d.lambda_w),
            lambda_k: file.lambda_k.unwrap_or(d.lambda_k),
            ridge: file.ridge.unwrap_or(d.ridge),
            sigma_scale: file.sigma_scale.unwrap_or(d.sigma_scale),
            kernel_size: file.kernel_size.unwrap_or(d.kernel_size),
            lut_bins: file.lut_bins.unwrap_or(d.lut_bins),
            max_blur: file.max_blur.unwrap_or(d.max_blur),
            seed: file.seed.unwrap_or(d.seed),
        })
    }

    pub fn ridge(&self) -> Ridge {
        match self.ridge {
            RidgeMode::Relative => Ridge::Relative(self.lambda_k),
            RidgeMode::Absolute => Ridge::Absolute(self.lambda_k),
        }
    }

    /// Checks every field against the preconditions of the operations that use it.
    pub fn validate(&self) -> Result<(), String> {
        if self.patch_size == 0 {
            return Err("patch_size must be at least 1".into());
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return Err(format!("stride must be in 1..={}, got {}", self.patch_size, self.stride));
        }
        if !(self.lambda_w.is_finite() && self.lambda_w >= 0.0) {
            return Err(format!("lambda_w must be >= 0, got {}", self.lambda_w));
        }
        if !(self.lambda_k.is_finite() && self.lambda_k > 0.0) {
            return Err(format!("lambda_k must be > 0, got {}", self.lambda_k));
        }
        if !(self.sigma_scale.is_finite() && self.sigma_scale >= 0.0) {
            return Err(format!("sigma_scale must be >= 0, got {}", self.sigma_scale));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size > MAX_KERNEL_SIZE || self.kernel_size > self.patch_size {
            return Err(format!(
                "kernel_size must be odd and at most min({MAX_KERNEL_SIZE}, patch_size), got {}",
                self.kernel_size
            ));
        }
        if self.lut_bins == 0 {
            return Err("lut_bins must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_blur) {
            return Err(format!("max_blur must be in [0, 1], got {}", self.max_blur));
        }
        Ok(())
    }
}

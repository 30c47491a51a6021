use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("pixel ({x}, {y}) is not covered by any patch")]
    Coverage { x: usize, y: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("kernel table has no usable samples")]
    EmptyTable,
    #[error("registration failed: confidence {confidence:.4} below {threshold}")]
    RegistrationFailure { confidence: f64, threshold: f64 },
    #[error("images are identical, PSNR is infinite")]
    InfinitePsnr,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

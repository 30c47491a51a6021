//! Ground-truth PSF recovery from registered sharp/blurry pairs.
//!
//! For a patch pair the kernel minimizing `||b - h * i||^2 + lambda ||h||^2`
//! under circular convolution has the per-frequency closed form
//! `H = conj(I) B / (|I|^2 + lambda)`. The ridge weight is either absolute or
//! relative to the peak power of the sharp patch spectrum; the relative form
//! behaves the same across patch sizes and intensity ranges.

use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blur::{crete_blur, total_variation};
use crate::error::{Error, Result};
use crate::fft;
use crate::image::{green_channel, Image, Kernel};
use crate::patch::grid_origins;

pub const DEFAULT_KERNEL_SIZE: usize = 15;
pub const DEFAULT_LAMBDA_K: f64 = 1e-3;
const FLAT_EPS: f64 = 1e-9;
pub const KERNEL_MAP_VERSION: u32 = 1;

/// Ridge weight of the kernel estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "lambda", rename_all = "lowercase")]
pub enum Ridge {
    /// Added to `|I|^2` as is.
    Absolute(f64),
    /// Multiplied by `max |I|^2` of the sharp patch first.
    Relative(f64),
}

impl Ridge {
    pub fn lambda(self) -> f64 {
        match self {
            Ridge::Absolute(l) | Ridge::Relative(l) => l,
        }
    }

    fn weight(self, peak: f64) -> f64 {
        match self {
            Ridge::Absolute(l) => l,
            Ridge::Relative(l) => l * peak,
        }
    }
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(DEFAULT_LAMBDA_K)
    }
}

/// Estimates the `k` x `k` kernel mapping `sharp` onto `blurry`.
pub fn estimate_kernel(sharp: &Image, blurry: &Image, k: usize, ridge: Ridge) -> Result<Kernel> {
    let sharp = green_channel(sharp);
    let blurry = green_channel(blurry);
    let (w, h) = sharp.dimensions();
    if blurry.dimensions() != (w, h) {
        return Err(Error::Dimension(format!(
            "sharp {w}x{h} and blurry {}x{} differ",
            blurry.width(),
            blurry.height()
        )));
    }
    if k % 2 == 0 || k > w.min(h) {
        return Err(Error::Domain(format!("kernel size {k} must be odd and fit the {w}x{h} patch")));
    }
    let lambda = ridge.lambda();
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda_k {lambda} must be positive")));
    }

    let spec_i = fft::forward_real(w, h, sharp.data());
    let spec_b = fft::forward_real(w, h, blurry.data());
    let peak = spec_i.iter().map(Complex64::norm_sqr).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::DegenerateInput("sharp patch is all zero".into()));
    }
    let ridge = ridge.weight(peak);
    let spec_h: Vec<Complex64> = spec_i
        .iter()
        .zip(&spec_b)
        .map(|(i, b)| i.conj() * b / (i.norm_sqr() + ridge))
        .collect();
    let centered = fft::fftshift(w, h, &fft::inverse_real(w, h, spec_h));

    let (cx, cy) = (w / 2, h / 2);
    let r = k / 2;
    let mut crop = Vec::with_capacity(k * k);
    for y in cy - r..=cy + r {
        crop.extend_from_slice(&centered[y * w + cx - r..=y * w + cx + r]);
    }
    Kernel::normalized(k, crop)
}

/// One estimated kernel and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCell {
    pub x: usize,
    pub y: usize,
    /// Blur level of the blurry patch.
    pub blur: f64,
    /// The sharp patch was flat; `kernel` is a placeholder delta.
    pub degenerate: bool,
    pub kernel: Kernel,
}

/// Grid of kernels estimated over a whole image pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMap {
    cells: Vec<KernelCell>,
    columns: usize,
    rows: usize,
    kernel_size: usize,
    patch_size: usize,
    stride: usize,
    ridge: Ridge,
    source: String,
}

impl KernelMap {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cells: Vec<KernelCell>,
        columns: usize,
        rows: usize,
        kernel_size: usize,
        patch_size: usize,
        stride: usize,
        ridge: Ridge,
        source: impl Into<String>,
    ) -> Result<Self> {
        if cells.len() != columns * rows {
            return Err(Error::Dimension(format!(
                "{} cells for a {columns}x{rows} grid",
                cells.len()
            )));
        }
        if cells.iter().any(|c| c.kernel.size() != kernel_size) {
            return Err(Error::Dimension(format!("every kernel must be {kernel_size}x{kernel_size}")));
        }
        Ok(Self {
            cells,
            columns,
            rows,
            kernel_size,
            patch_size,
            stride,
            ridge,
            source: source.into(),
        })
    }

    pub fn cells(&self) -> &[KernelCell] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [KernelCell] {
        &mut self.cells
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.columns, self.rows)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn ridge(&self) -> Ridge {
        self.ridge
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn set_source(&mut self, source: impl Into<String>) {
        self.source = source.into();
    }

    pub fn to_json(&self) -> Result<String> {
        let file = KernelMapFile {
            version: KERNEL_MAP_VERSION,
            columns: self.columns,
            rows: self.rows,
            kernel_size: self.kernel_size,
            patch_size: self.patch_size,
            stride: self.stride,
            ridge: self.ridge,
            source: self.source.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| CellFile {
                    x: c.x,
                    y: c.y,
                    blur: c.blur,
                    degenerate: c.degenerate,
                    kernel: c.kernel.data().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: KernelMapFile = serde_json::from_str(text)?;
        if file.version != KERNEL_MAP_VERSION {
            return Err(Error::Config(format!("unsupported kernel map version {}", file.version)));
        }
        let cells = file
            .cells
            .into_iter()
            .map(|c| {
                if !(0.0..=1.0).contains(&c.blur) {
                    return Err(Error::Config(format!("cell blur {} outside [0, 1]", c.blur)));
                }
                Ok(KernelCell {
                    x: c.x,
                    y: c.y,
                    blur: c.blur,
                    degenerate: c.degenerate,
                    kernel: Kernel::new(file.kernel_size, c.kernel)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        KernelMap::new(
            cells,
            file.columns,
            file.rows,
            file.kernel_size,
            file.patch_size,
            file.stride,
            file.ridge,
            file.source,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        KernelMap::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct KernelMapFile {
    version: u32,
    columns: usize,
    rows: usize,
    kernel_size: usize,
    patch_size: usize,
    stride: usize,
    ridge: Ridge,
    #[serde(default)]
    source: String,
    cells: Vec<CellFile>,
}

#[derive(Serialize, Deserialize)]
struct CellFile {
    x: usize,
    y: usize,
    blur: f64,
    degenerate: bool,
    kernel: Vec<f64>,
}

/// Estimates one kernel per patch of a registered image pair, using the green planes.
pub fn estimate_kernel_map(
    sharp: &Image,
    blurry: &Image,
    patch: usize,
    stride: usize,
    k: usize,
    ridge: Ridge,
) -> Result<KernelMap> {
    if sharp.dimensions() != blurry.dimensions() {
        return Err(Error::Dimension(format!(
            "sharp {}x{} and blurry {}x{} differ",
            sharp.width(),
            sharp.height(),
            blurry.width(),
            blurry.height()
        )));
    }
    let sharp = green_channel(sharp);
    let blurry = green_channel(blurry);
    let (origins, columns, rows) = grid_origins(sharp.width(), sharp.height(), patch, stride)?;
    if k % 2 == 0 || k > patch {
        return Err(Error::Domain(format!("kernel size {k} must be odd and at most {patch}")));
    }

    let cells = origins
        .par_iter()
        .map(|&(x, y)| {
            let s = sharp.crop(x, y, patch, patch)?;
            let b = blurry.crop(x, y, patch, patch)?;
            let blur = crete_blur(&b);
            let estimate = if total_variation(&s) < FLAT_EPS {
                None
            } else {
                match estimate_kernel(&s, &b, k, ridge) {
                    Ok(kernel) => Some(kernel),
                    Err(Error::DegenerateInput(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            let degenerate = estimate.is_none();
            let kernel = match estimate {
                Some(kernel) => kernel,
                None => Kernel::delta(k)?,
            };
            Ok(KernelCell {
                x,
                y,
                blur,
                degenerate,
                kernel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    KernelMap::new(cells, columns, rows, k, patch, stride, ridge, "")
}

/// Tiles every non-degenerate kernel, sorted by ascending blur and laid out
/// left to right, top to bottom, each contrast-stretched to `[0, 1]`.
pub fn kernel_montage(map: &KernelMap) -> Result<Image> {
    let mut cells: Vec<&KernelCell> = map.cells().iter().filter(|c| !c.degenerate).collect();
    if cells.is_empty() {
        return Err(Error::EmptyTable);
    }
    cells.sort_by(|a, b| a.blur.total_cmp(&b.blur));
    let k = map.kernel_size();
    let per_row = (cells.len() as f64).sqrt().ceil() as usize;
    let rows = cells.len().div_ceil(per_row);
    let tile = k + 1;
    let (w, h) = (per_row * tile + 1, rows * tile + 1);
    let mut data = vec![0.0; w * h];
    for (i, cell) in cells.iter().enumerate() {
        let (ox, oy) = ((i % per_row) * tile + 1, (i / per_row) * tile + 1);
        let d = cell.kernel.data();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        for r in 0..k {
            for c in 0..k {
                data[(oy + r) * w + ox + c] = (cell.kernel.at(r, c) - lo) / span;
            }
        }
    }
    Image::new(w, h, 1, data)
}

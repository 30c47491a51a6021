//! Overlapping patch grids and window-weighted stitching.
//!
//! Patches are laid out on a regular grid whose last row and column are
//! clamped against the image border, so every pixel is covered without
//! padding. Stitching blends overlapping patches with a separable
//! triangular window and divides by the accumulated weight, which makes
//! extract followed by stitch an exact identity.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Default patch side in pixels.
pub const DEFAULT_PATCH: usize = 64;
/// Default stride, half a patch.
pub const DEFAULT_STRIDE: usize = 32;

const WINDOW_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    patch_size: usize,
    stride: usize,
    source_width: usize,
    source_height: usize,
    columns: usize,
    rows: usize,
    origins: Vec<(usize, usize)>,
    patches: Vec<Image>,
}

/// Top-left coordinates along one axis: steps of `stride`, last one clamped to `dim - patch`.
pub fn axis_origins(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let span = dim - patch;
    let count = span.div_ceil(stride) + 1;
    (0..count).map(|i| (i * stride).min(span)).collect()
}

/// Checks the grid preconditions shared by every patch-wise operation.
pub fn validate_grid(width: usize, height: usize, patch: usize, stride: usize) -> Result<()> {
    if patch == 0 || patch > width.min(height) {
        return Err(Error::Dimension(format!(
            "patch size {patch} does not fit a {width}x{height} image"
        )));
    }
    if stride == 0 || stride > patch {
        return Err(Error::Dimension(format!(
            "stride {stride} must be in 1..={patch}"
        )));
    }
    Ok(())
}

/// Origins of every patch in row-major order, with the grid's column and row counts.
pub fn grid_origins(
    width: usize,
    height: usize,
    patch: usize,
    stride: usize,
) -> Result<(Vec<(usize, usize)>, usize, usize)> {
    validate_grid(width, height, patch, stride)?;
    let xs = axis_origins(width, patch, stride);
    let ys = axis_origins(height, patch, stride);
    let origins = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    Ok((origins, xs.len(), ys.len()))
}

pub fn extract_patches(img: &Image, patch_size: usize, stride: usize) -> Result<PatchGrid> {
    let (width, height) = img.dimensions();
    let (origins, columns, rows) = grid_origins(width, height, patch_size, stride)?;
    let patches = origins
        .par_iter()
        .map(|&(x, y)| img.crop(x, y, patch_size, patch_size))
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchGrid {
        patch_size,
        stride,
        source_width: width,
        source_height: height,
        columns,
        rows,
        origins,
        patches,
    })
}

impl PatchGrid {
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn source_dimensions(&self) -> (usize, usize) {
        (self.source_width, self.source_height)
    }

    /// Grid shape as `(columns, rows)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.columns, self.rows)
    }

    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn patches(&self) -> &[Image] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Same layout, new patch contents.
    pub fn with_patches(&self, patches: Vec<Image>) -> Result<PatchGrid> {
        if patches.len() != self.origins.len() {
            return Err(Error::Dimension(format!(
                "expected {} patches, got {}",
                self.origins.len(),
                patches.len()
            )));
        }
        if patches
            .iter()
            .any(|p| p.dimensions() != (self.patch_size, self.patch_size))
        {
            return Err(Error::Dimension(format!(
                "replacement patches must be {0}x{0}",
                self.patch_size
            )));
        }
        Ok(PatchGrid {
            patches,
            ..self.clone()
        })
    }

    /// Applies `f` to every patch in parallel, preserving grid order.
    pub fn par_map<F>(&self, f: F) -> Result<PatchGrid>
    where
        F: Fn(usize, &Image) -> Result<Image> + Sync,
    {
        let patches = self
            .patches
            .par_iter()
            .enumerate()
            .map(|(i, p)| f(i, p))
            .collect::<Result<Vec<_>>>()?;
        self.with_patches(patches)
    }
}

/// Triangular blend weights for one axis of a patch.
pub fn window(patch: usize) -> Vec<f64> {
    (0..patch)
        .map(|i| {
            let t = 2.0 * (i as f64 + 0.5) / patch as f64 - 1.0;
            (1.0 - t.abs()).max(WINDOW_FLOOR)
        })
        .collect()
}

/// Weighted accumulation buffer behind every stitch and splat.
pub(crate) struct Canvas {
    width: usize,
    height: usize,
    channels: usize,
    sum: Vec<f64>,
    weight: Vec<f64>,
}

impl Canvas {
    pub(crate) fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            sum: vec![0.0; width * height * channels],
            weight: vec![0.0; width * height],
        }
    }

    fn check_fit(&self, x0: usize, y0: usize, patch: usize) -> Result<()> {
        if x0 + patch > self.width || y0 + patch > self.height {
            return Err(Error::Dimension(format!(
                "patch at ({x0}, {y0}) of size {patch} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub(crate) fn add_patch(&mut self, x0: usize, y0: usize, patch: &Image, win: &[f64]) -> Result<()> {
        let p = patch.width();
        self.check_fit(x0, y0, p)?;
        if patch.channels() != self.channels || patch.height() != p {
            return Err(Error::Dimension("patch shape does not match canvas".into()));
        }
        let c = self.channels;
        let data = patch.data();
        for py in 0..p {
            let row = (y0 + py) * self.width;
            for px in 0..p {
                let w = win[py] * win[px];
                let idx = row + x0 + px;
                self.weight[idx] += w;
                for ch in 0..c {
                    self.sum[idx * c + ch] += w * data[(py * p + px) * c + ch];
                }
            }
        }
        Ok(())
    }

    /// Adds a constant-valued patch (single channel canvases only).
    pub(crate) fn add_constant(&mut self, x0: usize, y0: usize, patch: usize, value: f64, win: &[f64]) -> Result<()> {
        self.check_fit(x0, y0, patch)?;
        for py in 0..patch {
            let row = (y0 + py) * self.width;
            for px in 0..patch {
                let w = win[py] * win[px];
                self.weight[row + x0 + px] += w;
                self.sum[row + x0 + px] += w * value;
            }
        }
        Ok(())
    }

    pub(crate) fn finish(self) -> Result<Image> {
        let c = self.channels;
        let mut out = self.sum;
        for (i, &w) in self.weight.iter().enumerate() {
            if w <= 0.0 {
                return Err(Error::Coverage {
                    x: i % self.width,
                    y: i / self.width,
                });
            }
            for v in &mut out[i * c..(i + 1) * c] {
                *v /= w;
            }
        }
        Ok(Image::from_raw(self.width, self.height, c, out))
    }
}

/// Blends the grid's patches into an `out_w` x `out_h` image.
pub fn stitch_patches(grid: &PatchGrid, out_w: usize, out_h: usize) -> Result<Image> {
    let channels = grid
        .patches
        .first()
        .map(Image::channels)
        .ok_or_else(|| Error::Dimension("empty patch grid".into()))?;
    let win = window(grid.patch_size);
    let mut canvas = Canvas::new(out_w, out_h, channels);
    for (&(x, y), patch) in grid.origins.iter().zip(&grid.patches) {
        canvas.add_patch(x, y, patch, &win)?;
    }
    canvas.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| ((x * 31 + y * 17) % 97) as f64 / 96.0)
    }

    #[test]
    fn exact_fit_single_patch() {
        let g = extract_patches(&ramp(64, 64), 64, 64).unwrap();
        assert_eq!(g.origins(), &[(0, 0)]);
    }

    #[test]
    fn half_overlap_grid() {
        let g = extract_patches(&ramp(128, 128), 64, 32).unwrap();
        assert_eq!(g.shape(), (3, 3));
        let xs: Vec<usize> = g.origins().iter().take(3).map(|o| o.0).collect();
        assert_eq!(xs, vec![0, 32, 64]);
    }

    #[test]
    fn clamped_last_origin() {
        let g = extract_patches(&ramp(100, 100), 64, 64).unwrap();
        assert_eq!(g.shape(), (2, 2));
        assert_eq!(g.origins(), &[(0, 0), (36, 0), (0, 36), (36, 36)]);
    }

    #[test]
    fn too_small_image_is_dimension_error() {
        assert!(matches!(
            extract_patches(&ramp(40, 100), 64, 32),
            Err(Error::Dimension(_))
        ));
        assert!(extract_patches(&ramp(64, 64), 64, 0).is_err());
        assert!(extract_patches(&ramp(64, 64), 32, 33).is_err());
    }

    #[test]
    fn patches_are_copies() {
        let img = ramp(80, 80);
        let g = extract_patches(&img, 64, 16).unwrap();
        let (x, y) = g.origins()[1];
        assert_eq!(g.patches()[1], img.crop(x, y, 64, 64).unwrap());
    }

    #[test]
    fn constant_patches_stitch_to_constant() {
        let g = extract_patches(&Image::constant(150, 90, 0.37), 64, 20).unwrap();
        let out = stitch_patches(&g, 150, 90).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn single_patch_identity() {
        let img = ramp(64, 64);
        let g = extract_patches(&img, 64, 64).unwrap();
        let out = stitch_patches(&g, 64, 64).unwrap();
        assert!(out.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn overlap_blends_to_half_at_center() {
        let g = extract_patches(&Image::constant(96, 64, 0.0), 64, 32).unwrap();
        assert_eq!(g.origins(), &[(0, 0), (32, 0)]);
        let g = g
            .with_patches(vec![Image::constant(64, 64, 0.0), Image::constant(64, 64, 1.0)])
            .unwrap();
        let out = stitch_patches(&g, 96, 64).unwrap();
        let row: Vec<f64> = (0..96).map(|x| out.get(x, 10, 0)).collect();
        assert!(row[..32].iter().all(|&v| v == 0.0));
        assert!(row[64..].iter().all(|&v| v == 1.0));
        for x in 32..64 {
            assert!(row[x] > row[x - 1] - 1e-12, "ramp not monotone at {x}");
        }
        assert!(((row[47] + row[48]) / 2.0 - 0.5).abs() < 1e-9);
        assert!(row[47] < 0.5 && row[48] > 0.5);
    }

    #[test]
    fn uncovered_output_is_coverage_error() {
        let g = extract_patches(&ramp(64, 64), 64, 64).unwrap();
        assert!(matches!(
            stitch_patches(&g, 64, 70),
            Err(Error::Coverage { y: 64, .. })
        ));
        assert!(matches!(stitch_patches(&g, 32, 32), Err(Error::Dimension(_))));
    }

    #[test]
    fn window_is_symmetric_and_positive() {
        let w = window(64);
        assert!(w.iter().all(|&v| v >= WINDOW_FLOOR));
        for i in 0..32 {
            assert_eq!(w[i], w[63 - i]);
        }
        assert_eq!(window(1), vec![1.0]);
    }

    #[test]
    fn rgb_round_trip() {
        let planes = vec![ramp(70, 66), ramp(70, 66).map(|v| 1.0 - v), Image::constant(70, 66, 0.2)];
        let img = Image::from_planes(&planes).unwrap();
        let g = extract_patches(&img, 32, 12).unwrap();
        let out = stitch_patches(&g, 70, 66).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

//! Core raster types shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// Row-major, channel-interleaved floating point image.
///
/// Intensities are kept in `[0, 1]` by the loaders and by every operation
/// that produces a displayable result; intermediate values produced by
/// unclamped filters may fall outside that range.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Dimension(format!(
                "unsupported channel count {channels}, expected 1 or 3"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty image {width}x{height}")));
        }
        if width * height * channels != data.len() {
            return Err(Error::Dimension(format!(
                "{width}x{height}x{channels} does not match buffer of {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite intensity {bad}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image filled with `value`.
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            channels: 1,
            data: vec![value; width * height],
        }
    }

    /// Single-channel image evaluated pixel by pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    /// Interleaves single-channel planes into one image.
    pub fn from_planes(planes: &[Image]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Dimension("no planes".into()))?;
        let (w, h) = first.dimensions();
        if planes
            .iter()
            .any(|p| p.dimensions() != (w, h) || p.channels != 1)
        {
            return Err(Error::Dimension("planes differ in size or are not single-channel".into()));
        }
        let c = planes.len();
        let mut data = vec![0.0; w * h * c];
        for (ci, plane) in planes.iter().enumerate() {
            for (i, v) in plane.data.iter().enumerate() {
                data[i * c + ci] = *v;
            }
        }
        Image::new(w, h, c, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Extracts one channel as a single-channel image.
    pub fn plane(&self, c: usize) -> Image {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn planes(&self) -> Vec<Image> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Copies the `w` x `h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Dimension(format!(
                "window {w}x{h} at ({x0}, {y0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(Image {
            width: w,
            height: h,
            channels: c,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp_unit(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(width * height * channels, data.len());
        Self {
            width,
            height,
            channels,
            data,
        }
    }
}

/// Projects an RGB image onto its green plane; single-channel input is returned as is.
pub fn green_channel(img: &Image) -> Image {
    match img.channels() {
        3 => img.plane(1),
        _ => img.clone(),
    }
}

/// Largest supported kernel side.
pub const MAX_KERNEL_SIZE: usize = 127;

/// Square, odd-sized point-spread function stored row-major.
///
/// Weights may be negative (estimated kernels keep their ringing) but are
/// always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    data: Vec<f64>,
}

impl Kernel {
    /// Wraps raw weights without normalizing them.
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 || size == 0 || size > MAX_KERNEL_SIZE {
            return Err(Error::Domain(format!(
                "kernel size {size} must be odd and in 1..={MAX_KERNEL_SIZE}"
            )));
        }
        if data.len() != size * size {
            return Err(Error::Dimension(format!(
                "kernel of size {size} needs {} weights, got {}",
                size * size,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite kernel weight".into()));
        }
        Ok(Self { size, data })
    }

    /// Wraps raw weights and rescales them to unit sum.
    pub fn normalized(size: usize, data: Vec<f64>) -> Result<Self> {
        Kernel::new(size, data)?.normalize()
    }

    /// Unit impulse of the given size.
    pub fn delta(size: usize) -> Result<Self> {
        let mut data = vec![0.0; size * size];
        if let Some(c) = data.get_mut(size * size / 2) {
            *c = 1.0;
        }
        Kernel::new(size, data)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn normalize(self) -> Result<Self> {
        let s = self.sum();
        if s.abs() < 1e-12 {
            return Err(Error::DegenerateInput(
                "kernel weights sum to zero, cannot normalize".into(),
            ));
        }
        Ok(Self {
            size: self.size,
            data: self.data.into_iter().map(|v| v / s).collect(),
        })
    }

    /// Per-axis variance of the weights treated as a 2D distribution,
    /// as `(horizontal, vertical)`.
    pub fn second_moments(&self) -> (f64, f64) {
        let total = self.sum();
        let r = self.radius() as f64;
        let (mut mx, mut my) = (0.0, 0.0);
        for row in 0..self.size {
            for col in 0..self.size {
                let w = self.at(row, col);
                mx += w * (col as f64 - r);
                my += w * (row as f64 - r);
            }
        }
        mx /= total;
        my /= total;
        let (mut vx, mut vy) = (0.0, 0.0);
        for row in 0..self.size {
            for col in 0..self.size {
                let w = self.at(row, col);
                vx += w * (col as f64 - r - mx).powi(2);
                vy += w * (row as f64 - r - my).powi(2);
            }
        }
        (vx / total, vy / total)
    }

    /// Total spread, the sum of the per-axis second moments.
    pub fn spread(&self) -> f64 {
        let (vx, vy) = self.second_moments();
        vx + vy
    }

    pub fn l2_distance(&self, other: &Kernel) -> Result<f64> {
        if self.size != other.size {
            return Err(Error::Dimension(format!(
                "kernel sizes differ: {} vs {}",
                self.size, other.size
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }
}

/// Per-pixel blur level in `[0, 1]`, used as a proxy for distance from the focal plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl BlurMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "blur map {width}x{height} does not match {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("blur level {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Mean blur over a rectangular window.
    pub fn window_mean(&self, x0: usize, y0: usize, w: usize, h: usize) -> f64 {
        let mut acc = 0.0;
        for y in y0..y0 + h {
            acc += self.values[y * self.width + x0..y * self.width + x0 + w]
                .iter()
                .sum::<f64>();
        }
        acc / (w * h) as f64
    }

    /// Mean of each column, left to right.
    pub fn column_means(&self) -> Vec<f64> {
        (0..self.width)
            .map(|x| (0..self.height).map(|y| self.get(x, y)).sum::<f64>() / self.height as f64)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn to_image(&self) -> Image {
        Image::from_raw(self.width, self.height, 1, self.values.clone())
    }
}

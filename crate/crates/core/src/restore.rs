//! Frequency-domain restoration and the space-variant deblurring pipeline.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::blur::blur_map;
use crate::error::{Error, Result};
use crate::fft;
use crate::image::{green_channel, Image, Kernel};
use crate::patch::{extract_patches, stitch_patches, DEFAULT_PATCH, DEFAULT_STRIDE};
use crate::psf::{gaussian_kernel, sigma_from_blur, KernelLut, DEFAULT_SIGMA_SCALE};

pub const DEFAULT_LAMBDA_W: f64 = 0.1;

const LAPLACIAN: [f64; 9] = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];

fn per_plane(img: &Image, f: impl Fn(usize, usize, &[f64]) -> Vec<f64>) -> Image {
    let (w, h) = img.dimensions();
    let planes: Vec<Image> = img
        .planes()
        .iter()
        .map(|p| Image::from_raw(w, h, 1, f(w, h, p.data())))
        .collect();
    if planes.len() == 1 {
        planes.into_iter().next().expect("one plane")
    } else {
        Image::from_planes(&planes).expect("planes share a shape")
    }
}

/// Naive deconvolution `B / OTF`, with `|OTF|` floored at `eps` (phase kept).
///
/// Amplifies noise wherever the transfer function is small; kept as a baseline.
pub fn inverse_filter(blurry: &Image, ker: &Kernel, eps: f64) -> Result<Image> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps {eps} must be positive")));
    }
    Ok(per_plane(blurry, |w, h, plane| {
        let otf = fft::transfer_function(ker.data(), ker.size(), w, h);
        let spec = fft::forward_real(w, h, plane)
            .into_iter()
            .zip(otf)
            .map(|(b, o)| {
                let mag = o.norm();
                let o = if mag >= eps {
                    o
                } else if mag > 0.0 {
                    o * (eps / mag)
                } else {
                    Complex64::new(eps, 0.0)
                };
                b / o
            })
            .collect();
        fft::inverse_real(w, h, spec)
    }))
}

/// Laplacian-regularized Wiener deconvolution without the final clamp.
pub fn wiener_unclamped(blurry: &Image, ker: &Kernel, lambda_w: f64) -> Result<Image> {
    if !(lambda_w >= 0.0 && lambda_w.is_finite()) {
        return Err(Error::Domain(format!("lambda_w {lambda_w} must be >= 0")));
    }
    Ok(per_plane(blurry, |w, h, plane| {
        let otf = fft::transfer_function(ker.data(), ker.size(), w, h);
        let reg = fft::transfer_function(&LAPLACIAN, 3, w, h);
        let spec = fft::forward_real(w, h, plane)
            .into_iter()
            .zip(otf.iter().zip(&reg))
            .map(|(b, (o, l))| {
                let denom = o.norm_sqr() + lambda_w * l.norm_sqr();
                if denom > 0.0 {
                    o.conj() * b / denom
                } else {
                    Complex64::default()
                }
            })
            .collect();
        fft::inverse_real(w, h, spec)
    }))
}

/// `conj(OTF) B / (|OTF|^2 + lambda |L|^2)` with `L` the 5-point Laplacian,
/// clamped to `[0, 1]`.
pub fn wiener(blurry: &Image, ker: &Kernel, lambda_w: f64) -> Result<Image> {
    Ok(wiener_unclamped(blurry, ker, lambda_w)?.clamp_unit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Gaussian PSF with `sigma = sigma_scale * blur`.
    Gaussian,
    /// Kernel lookup table indexed by blur.
    Lut,
}

#[derive(Debug, Clone)]
pub struct DeblurParams {
    pub method: Method,
    pub patch: usize,
    pub stride: usize,
    pub lambda_w: f64,
    pub sigma_scale: f64,
    /// Patches blurrier than this are passed through unrestored.
    pub max_blur: f64,
    pub lut: Option<KernelLut>,
}

impl Default for DeblurParams {
    fn default() -> Self {
        Self {
            method: Method::Gaussian,
            patch: DEFAULT_PATCH,
            stride: DEFAULT_STRIDE,
            lambda_w: DEFAULT_LAMBDA_W,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            max_blur: 1.0,
            lut: None,
        }
    }
}

/// Per-patch decision made by the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPlan {
    pub x: usize,
    pub y: usize,
    pub blur: f64,
    /// `None` when the patch is passed through.
    pub kernel: Option<Kernel>,
}

/// Deblurred image with the plan that produced it.
#[derive(Debug, Clone)]
pub struct DeblurOutput {
    pub image: Image,
    pub plan: Vec<PatchPlan>,
}

fn select_kernel(params: &DeblurParams, blur: f64) -> Result<Kernel> {
    match params.method {
        Method::Gaussian => gaussian_kernel(sigma_from_blur(blur, params.sigma_scale)?, None),
        Method::Lut => Ok(params
            .lut
            .as_ref()
            .ok_or_else(|| Error::Config("the lut method needs a kernel lookup table".into()))?
            .query(blur)),
    }
}

/// Space-variant deblurring: blur map on the green plane, one kernel per
/// patch, Wiener restoration of every channel with that kernel, stitching.
pub fn deblur_image(img: &Image, params: &DeblurParams) -> Result<Image> {
    deblur_image_with_plan(img, params).map(|o| o.image)
}

pub fn deblur_image_with_plan(img: &Image, params: &DeblurParams) -> Result<DeblurOutput> {
    if params.method == Method::Lut && params.lut.is_none() {
        return Err(Error::Config("the lut method needs a kernel lookup table".into()));
    }
    if !(0.0..=1.0).contains(&params.max_blur) {
        return Err(Error::Config(format!("max_blur {} outside [0, 1]", params.max_blur)));
    }
    let map = blur_map(&green_channel(img), params.patch, params.stride)?;
    let grid = extract_patches(img, params.patch, params.stride)?;
    let p = params.patch;

    let plan = grid
        .origins()
        .par_iter()
        .map(|&(x, y)| {
            let blur = map.window_mean(x, y, p, p);
            let kernel = if blur > params.max_blur {
                None
            } else {
                Some(select_kernel(params, blur)?)
            };
            Ok(PatchPlan { x, y, blur, kernel })
        })
        .collect::<Result<Vec<_>>>()?;

    let restored = grid.par_map(|i, patch| match &plan[i].kernel {
        Some(k) => wiener(patch, k, params.lambda_w),
        None => Ok(patch.clone()),
    })?;
    let image = stitch_patches(&restored, img.width(), img.height())?;
    Ok(DeblurOutput { image, plan })
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if a.dimensions() != b.dimensions() || a.channels() != b.channels() {
        return Err(Error::Dimension(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio for unit-range images, `10 log10(1 / mse)`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    psnr_from_mse(mse(a, b)?)
}

pub fn psnr_from_mse(mse: f64) -> Result<f64> {
    if mse == 0.0 {
        return Err(Error::InfinitePsnr);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

//! Synthetic degradation: convolution with reflected borders, depth-dependent
//! Gaussian blur, additive noise and test textures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::image::{Image, Kernel};
use crate::patch::{grid_origins, window, Canvas};
use crate::psf::{gaussian_kernel, DELTA_SIGMA};

/// Kernels larger than this are applied through the FFT.
pub const DIRECT_MAX_KERNEL: usize = 15;

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Single plane of the `w + 2r` x `h + 2r` neighbourhood around a window, reflected at the image border.
fn padded_window(img: &Image, ch: usize, x0: usize, y0: usize, w: usize, h: usize, r: usize) -> Vec<f64> {
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let mut out = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        let sy = reflect(y0 as isize + py as isize - r as isize, img.height());
        for px in 0..pw {
            let sx = reflect(x0 as isize + px as isize - r as isize, img.width());
            out.push(img.get(sx, sy, ch));
        }
    }
    out
}

fn valid_direct(padded: &[f64], w: usize, h: usize, ker: &Kernel) -> Vec<f64> {
    let k = ker.size();
    let pw = w + k - 1;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for i in 0..k {
                let row = (y + k - 1 - i) * pw;
                for j in 0..k {
                    acc += ker.at(i, j) * padded[row + x + k - 1 - j];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn valid_fft(padded: &[f64], w: usize, h: usize, ker: &Kernel) -> Vec<f64> {
    let r = ker.radius();
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let tf = fft::transfer_function(ker.data(), ker.size(), pw, ph);
    let spec: Vec<Complex64> = fft::forward_real(pw, ph, padded)
        .into_iter()
        .zip(&tf)
        .map(|(a, b)| a * b)
        .collect();
    let full = fft::inverse_real(pw, ph, spec);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        out.extend_from_slice(&full[(y + r) * pw + r..(y + r) * pw + r + w]);
    }
    out
}

fn convolve_window_with(
    img: &Image,
    ker: &Kernel,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    use_fft: bool,
) -> Result<Image> {
    if x0 + w > img.width() || y0 + h > img.height() || w == 0 || h == 0 {
        return Err(Error::Dimension(format!(
            "window {w}x{h} at ({x0}, {y0}) exceeds {}x{}",
            img.width(),
            img.height()
        )));
    }
    let r = ker.radius();
    let planes: Vec<Image> = (0..img.channels())
        .map(|ch| {
            let padded = padded_window(img, ch, x0, y0, w, h, r);
            let data = if use_fft {
                valid_fft(&padded, w, h, ker)
            } else {
                valid_direct(&padded, w, h, ker)
            };
            Image::from_raw(w, h, 1, data)
        })
        .collect();
    if planes.len() == 1 {
        Ok(planes.into_iter().next().expect("one plane"))
    } else {
        Image::from_planes(&planes)
    }
}

/// Convolution restricted to an output window; samples outside the image are reflected.
pub fn convolve_window(img: &Image, ker: &Kernel, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
    convolve_window_with(img, ker, x0, y0, w, h, ker.size() > DIRECT_MAX_KERNEL)
}

/// 2D convolution with reflected borders, same size as the input.
pub fn convolve(img: &Image, ker: &Kernel) -> Image {
    convolve_window(img, ker, 0, 0, img.width(), img.height()).expect("full window fits")
}

/// Spatial-domain evaluation regardless of kernel size.
pub fn convolve_direct(img: &Image, ker: &Kernel) -> Image {
    convolve_window_with(img, ker, 0, 0, img.width(), img.height(), false).expect("full window fits")
}

/// Frequency-domain evaluation regardless of kernel size.
pub fn convolve_fft(img: &Image, ker: &Kernel) -> Image {
    convolve_window_with(img, ker, 0, 0, img.width(), img.height(), true).expect("full window fits")
}

/// Circular convolution, the boundary model assumed by frequency-domain
/// restoration. Evaluated directly in the spatial domain.
pub fn convolve_periodic(img: &Image, ker: &Kernel) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let k = ker.size();
    let r = ker.radius() as isize;
    let mut out = vec![0.0; w * h * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for i in 0..k {
                    let sy = (y as isize - (i as isize - r)).rem_euclid(h as isize) as usize;
                    for j in 0..k {
                        let sx = (x as isize - (j as isize - r)).rem_euclid(w as isize) as usize;
                        acc += ker.at(i, j) * img.get(sx, sy, ch);
                    }
                }
                out[(y * w + x) * c + ch] = acc;
            }
        }
    }
    Image::from_raw(w, h, c, out)
}

/// Spatial field of Gaussian blur widths in pixels.
#[derive(Debug, Clone, PartialEq)]
pub enum DepthProfile {
    Constant(f64),
    /// Linear in the column index: `left` at column 0, `right` at the last column.
    HorizontalRamp { left: f64, right: f64 },
    /// Arbitrary per-pixel field, sampled at the nearest pixel.
    Field {
        width: usize,
        height: usize,
        sigma: Vec<f64>,
    },
}

impl DepthProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        let valid = match self {
            DepthProfile::Constant(s) => ok(*s),
            DepthProfile::HorizontalRamp { left, right } => ok(*left) && ok(*right),
            DepthProfile::Field { width, height, sigma } => {
                sigma.len() == width * height && sigma.iter().all(|&s| ok(s))
            }
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Domain("depth profile needs finite, non-negative sigma".into()))
        }
    }

    /// Blur width at continuous pixel coordinates on a `width` x `height` image.
    pub fn sigma_at(&self, x: f64, y: f64, width: usize, height: usize) -> f64 {
        match self {
            DepthProfile::Constant(s) => *s,
            DepthProfile::HorizontalRamp { left, right } => {
                let t = if width > 1 { (x / (width - 1) as f64).clamp(0.0, 1.0) } else { 0.0 };
                left + (right - left) * t
            }
            DepthProfile::Field {
                width: fw,
                height: fh,
                sigma,
            } => {
                let sx = ((x / width as f64) * *fw as f64).floor().clamp(0.0, (*fw - 1) as f64) as usize;
                let sy = ((y / height as f64) * *fh as f64).floor().clamp(0.0, (*fh - 1) as f64) as usize;
                sigma[sy * fw + sx]
            }
        }
    }
}

/// Ground-truth blur width applied to one synthetic patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSigma {
    pub x: usize,
    pub y: usize,
    pub sigma: f64,
}

/// Depth-dependent blur: each patch (stride `patch / 2`) is blurred with the
/// Gaussian whose width the profile gives at the patch center, then the
/// patches are blended with the stitching window.
pub fn synth_depth_blur(sharp: &Image, profile: &DepthProfile, patch: usize) -> Result<Image> {
    synth_depth_blur_with_truth(sharp, profile, patch).map(|(img, _)| img)
}

/// As [`synth_depth_blur`], also returning the sigma used for every patch.
pub fn synth_depth_blur_with_truth(
    sharp: &Image,
    profile: &DepthProfile,
    patch: usize,
) -> Result<(Image, Vec<PatchSigma>)> {
    profile.validate()?;
    let (w, h) = sharp.dimensions();
    let stride = (patch / 2).max(1);
    let (origins, _, _) = grid_origins(w, h, patch, stride)?;
    let center = (patch as f64 - 1.0) / 2.0;
    let blurred = origins
        .par_iter()
        .map(|&(x, y)| {
            let sigma = profile.sigma_at(x as f64 + center, y as f64 + center, w, h);
            let tile = if sigma < DELTA_SIGMA {
                sharp.crop(x, y, patch, patch)?
            } else {
                let ker = gaussian_kernel(sigma, None)?;
                convolve_window(sharp, &ker, x, y, patch, patch)?
            };
            Ok((PatchSigma { x, y, sigma }, tile))
        })
        .collect::<Result<Vec<_>>>()?;

    let win = window(patch);
    let mut canvas = Canvas::new(w, h, sharp.channels());
    let mut truth = Vec::with_capacity(blurred.len());
    for (ps, tile) in blurred {
        canvas.add_patch(ps.x, ps.y, &tile, &win)?;
        truth.push(ps);
    }
    Ok((canvas.finish()?, truth))
}

/// Adds zero-mean Gaussian noise and clamps to `[0, 1]`; reproducible per seed.
pub fn add_noise(img: &Image, sigma_n: f64, seed: u64) -> Result<Image> {
    if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
        return Err(Error::Domain(format!("noise level {sigma_n} must be >= 0")));
    }
    if sigma_n == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma_n).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    Ok(Image::from_raw(img.width(), img.height(), img.channels(), data))
}

/// Uniform white noise smoothed by a Gaussian of width `smoothing` and
/// stretched to span `[0, 1]`.
pub fn noise_texture(width: usize, height: usize, smoothing: f64, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Image::from_fn(width, height, |_, _| rng.random::<f64>());
    let smooth = if smoothing >= DELTA_SIGMA {
        convolve(&raw, &gaussian_kernel(smoothing, None)?)
    } else {
        raw
    };
    let (lo, hi) = smooth
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-12);
    Ok(smooth.map(|v| (v - lo) / span))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(n: usize, seed: u64) -> Image {
        noise_texture(n, n, 0.0, seed).unwrap()
    }

    fn max_diff(a: &Image, b: &Image) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(reflect(-5, 1), 0);
        assert_eq!(reflect(9, 2), 1);
    }

    #[test]
    fn identity_kernel() {
        let img = texture(16, 1);
        assert_eq!(convolve(&img, &Kernel::delta(1).unwrap()), img);
    }

    #[test]
    fn constant_is_preserved() {
        let img = Image::constant(20, 17, 0.3);
        let ker = gaussian_kernel(3.0, None).unwrap();
        assert!(convolve(&img, &ker).data().iter().all(|v| (v - 0.3).abs() < 1e-9));
    }

    #[test]
    fn impulse_response_of_box() {
        let img = Image::from_fn(9, 9, |x, y| if x == 4 && y == 4 { 1.0 } else { 0.0 });
        let ker = Kernel::normalized(3, vec![1.0; 9]).unwrap();
        let out = convolve(&img, &ker);
        for y in 0..9 {
            for x in 0..9 {
                let expected = if (3..=5).contains(&x) && (3..=5).contains(&y) { 1.0 / 9.0 } else { 0.0 };
                assert!((out.get(x, y, 0) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convolution_is_not_correlation() {
        // weight one column right of center moves content one pixel right
        let mut w = vec![0.0; 9];
        w[5] = 1.0;
        let ker = Kernel::new(3, w).unwrap();
        let img = Image::from_fn(8, 4, |x, _| x as f64);
        let out = convolve_periodic(&img, &ker);
        assert_eq!(out.get(3, 1, 0), 2.0);
        assert_eq!(convolve(&img, &ker).get(3, 1, 0), 2.0);
    }

    #[test]
    fn direct_and_fft_agree() {
        let img = texture(40, 3);
        for sigma in [0.7, 2.0, 5.0] {
            let ker = gaussian_kernel(sigma, None).unwrap();
            assert!(max_diff(&convolve_direct(&img, &ker), &convolve_fft(&img, &ker)) < 1e-9);
        }
    }

    #[test]
    fn window_matches_full_convolution() {
        let img = texture(48, 4);
        let ker = gaussian_kernel(3.0, None).unwrap();
        let full = convolve(&img, &ker);
        let part = convolve_window(&img, &ker, 10, 20, 16, 16).unwrap();
        assert!(max_diff(&part, &full.crop(10, 20, 16, 16).unwrap()) < 1e-9);
    }

    #[test]
    fn kernel_wider_than_image() {
        let img = texture(8, 5);
        let ker = gaussian_kernel(6.0, None).unwrap();
        assert!(ker.size() > 8);
        let out = convolve(&img, &ker);
        assert!((out.mean() - img.mean()).abs() < 0.1);
    }

    #[test]
    fn no_blur_profile_is_identity() {
        let img = texture(100, 6);
        let out = synth_depth_blur(&img, &DepthProfile::Constant(0.0), 64).unwrap();
        assert!(max_diff(&out, &img) < 1e-6);
    }

    #[test]
    fn constant_profile_matches_global_blur() {
        let img = texture(128, 7);
        let out = synth_depth_blur(&img, &DepthProfile::Constant(2.0), 64).unwrap();
        let global = convolve(&img, &gaussian_kernel(2.0, None).unwrap());
        let inner_a = out.crop(32, 32, 64, 64).unwrap();
        let inner_b = global.crop(32, 32, 64, 64).unwrap();
        assert!(max_diff(&inner_a, &inner_b) < 2e-3);
    }

    #[test]
    fn truth_reports_patch_sigmas() {
        let img = texture(128, 8);
        let (_, truth) = synth_depth_blur_with_truth(
            &img,
            &DepthProfile::HorizontalRamp { left: 0.0, right: 8.0 },
            64,
        )
        .unwrap();
        assert_eq!(truth.len(), 9);
        assert!(truth.windows(2).filter(|p| p[0].y == p[1].y).all(|p| p[1].sigma > p[0].sigma));
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(DepthProfile::Constant(-1.0).validate().is_err());
        assert!(DepthProfile::Field { width: 2, height: 2, sigma: vec![0.0; 3] }
            .validate()
            .is_err());
    }

    #[test]
    fn field_profile_lookup() {
        let p = DepthProfile::Field { width: 2, height: 1, sigma: vec![1.0, 3.0] };
        assert_eq!(p.sigma_at(10.0, 5.0, 100, 10), 1.0);
        assert_eq!(p.sigma_at(60.0, 5.0, 100, 10), 3.0);
    }

    #[test]
    fn zero_noise_is_identity() {
        let img = texture(16, 9);
        assert_eq!(add_noise(&img, 0.0, 3).unwrap(), img);
        assert!(add_noise(&img, -0.1, 3).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let img = Image::constant(32, 32, 0.5);
        let a = add_noise(&img, 0.05, 11).unwrap();
        let b = add_noise(&img, 0.05, 11).unwrap();
        let c = add_noise(&img, 0.05, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_level_statistics() {
        let img = Image::constant(64, 64, 0.5);
        let noisy = add_noise(&img, 0.01, 0).unwrap();
        let n = noisy.data().len() as f64;
        let mean = noisy.mean();
        let var = noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((std - 0.01).abs() < 0.0015, "sample std {std}");
    }

    #[test]
    fn texture_spans_unit_interval() {
        let t = noise_texture(32, 24, 1.5, 2).unwrap();
        let max = t.data().iter().cloned().fold(0.0, f64::max);
        let min = t.data().iter().cloned().fold(1.0, f64::min);
        assert_eq!((min, max), (0.0, 1.0));
    }
}

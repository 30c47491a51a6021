//! Focal-stack preprocessing: translation registration by phase correlation
//! and all-in-focus fusion by per-patch sharpest-member selection.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::blur::crete_blur;
use crate::error::{Error, Result};
use crate::fft;
use crate::image::{green_channel, Image};
use crate::patch::{grid_origins, stitch_patches, extract_patches};

/// Registrations with a lower normalized peak are rejected.
pub const MIN_CONFIDENCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub dx: i64,
    pub dy: i64,
    /// Correlation peak over the root energy of the correlation surface, in `[0, 1]`.
    pub confidence: f64,
}

fn hann(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn windowed(img: &Image) -> Vec<f64> {
    let (w, h) = img.dimensions();
    let mean = img.mean();
    let (wx, wy) = (hann(w), hann(h));
    img.data()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean) * wx[i % w] * wy[i / w])
        .collect()
}

/// Integer translation `(dx, dy)` such that `moving(x, y) ~ reference(x - dx, y - dy)`.
pub fn register_translation(reference: &Image, moving: &Image) -> Result<Registration> {
    if reference.dimensions() != moving.dimensions() {
        return Err(Error::Dimension("registration needs equally sized images".into()));
    }
    let (w, h) = reference.dimensions();
    let fr = fft::forward_real(w, h, &windowed(&green_channel(reference)));
    let fm = fft::forward_real(w, h, &windowed(&green_channel(moving)));
    let cross: Vec<Complex64> = fr
        .iter()
        .zip(&fm)
        .map(|(r, m)| {
            let c = r.conj() * m;
            let mag = c.norm();
            if mag > 1e-12 {
                c / mag
            } else {
                Complex64::default()
            }
        })
        .collect();
    let surface = fft::inverse_real(w, h, cross);

    let energy = surface.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (peak_idx, peak) = surface
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let confidence = if energy > 0.0 { (peak / energy).clamp(0.0, 1.0) } else { 0.0 };
    if confidence < MIN_CONFIDENCE {
        return Err(Error::RegistrationFailure {
            confidence,
            threshold: MIN_CONFIDENCE,
        });
    }
    let wrap = |i: usize, n: usize| if i > n / 2 { i as i64 - n as i64 } else { i as i64 };
    Ok(Registration {
        dx: wrap(peak_idx % w, w),
        dy: wrap(peak_idx / w, h),
        confidence,
    })
}

/// Translates by `(dx, dy)`, replicating edge pixels into the uncovered border.
pub fn shift_image(img: &Image, dx: i64, dy: i64) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut data = Vec::with_capacity(w * h * c);
    for y in 0..h {
        let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
        for x in 0..w {
            let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
            for ch in 0..c {
                data.push(img.get(sx, sy, ch));
            }
        }
    }
    Image::new(w, h, c, data).expect("same shape")
}

/// Registers every frame against `stack[ref_index]` and undoes its translation.
pub fn register_stack(stack: &[Image], ref_index: usize) -> Result<(Vec<Image>, Vec<Registration>)> {
    let reference = stack
        .get(ref_index)
        .ok_or_else(|| Error::Dimension(format!("reference index {ref_index} outside stack of {}", stack.len())))?;
    let results = stack
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            if i == ref_index {
                return Ok((frame.clone(), Registration { dx: 0, dy: 0, confidence: 1.0 }));
            }
            let reg = register_translation(reference, frame)?;
            Ok((shift_image(frame, -reg.dx, -reg.dy), reg))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().unzip())
}

#[derive(Debug, Clone)]
pub struct FusedStack {
    pub image: Image,
    /// Patch origins in grid order.
    pub origins: Vec<(usize, usize)>,
    /// Winning stack index per patch, same order as `origins`.
    pub selection: Vec<usize>,
    /// Blur score of the winning member per patch.
    pub scores: Vec<f64>,
}

/// All-in-focus composite: every patch comes from the least blurry stack
/// member (lowest index on ties), blended with the stitching window.
pub fn fuse_stack(stack: &[Image], patch: usize, stride: usize) -> Result<FusedStack> {
    let first = stack.first().ok_or_else(|| Error::DegenerateInput("empty stack".into()))?;
    let (w, h) = first.dimensions();
    if stack
        .iter()
        .any(|img| img.dimensions() != (w, h) || img.channels() != first.channels())
    {
        return Err(Error::Dimension("stack members differ in shape".into()));
    }
    let (origins, _, _) = grid_origins(w, h, patch, stride)?;
    let greens: Vec<Image> = stack.iter().map(green_channel).collect();

    let picks = origins
        .par_iter()
        .map(|&(x, y)| {
            let mut best = (0usize, f64::INFINITY);
            for (i, g) in greens.iter().enumerate() {
                let b = crete_blur(&g.crop(x, y, patch, patch)?);
                if b < best.1 {
                    best = (i, b);
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;

    let grid = extract_patches(first, patch, stride)?;
    let chosen = grid.par_map(|i, _| {
        let (x, y) = origins[i];
        stack[picks[i].0].crop(x, y, patch, patch)
    })?;
    let image = stitch_patches(&chosen, w, h)?;
    Ok(FusedStack {
        image,
        origins,
        selection: picks.iter().map(|p| p.0).collect(),
        scores: picks.iter().map(|p| p.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{add_noise, convolve, noise_texture};
    use crate::psf::gaussian_kernel;

    fn texture(n: usize, seed: u64) -> Image {
        noise_texture(n, n, 1.0, seed).unwrap()
    }

    #[test]
    fn self_registration_is_zero() {
        let t = texture(64, 1);
        let reg = register_translation(&t, &t).unwrap();
        assert_eq!((reg.dx, reg.dy), (0, 0));
        let other = register_translation(&t, &shift_image(&t, 2, 1)).unwrap();
        assert!(reg.confidence >= other.confidence);
    }

    #[test]
    fn known_shift_recovered() {
        let t = texture(128, 2);
        let moved = shift_image(&t, 5, -3);
        let reg = register_translation(&t, &moved).unwrap();
        assert_eq!((reg.dx, reg.dy), (5, -3));
    }

    #[test]
    fn noisy_shift_recovered_with_lower_confidence() {
        let t = texture(128, 3);
        let moved = shift_image(&t, 5, -3);
        let clean = register_translation(&t, &moved).unwrap();
        let noisy = register_translation(&t, &add_noise(&moved, 0.01, 3).unwrap()).unwrap();
        assert_eq!((noisy.dx, noisy.dy), (5, -3));
        assert!(noisy.confidence < clean.confidence);
    }

    #[test]
    fn unrelated_images_fail() {
        let a = noise_texture(256, 256, 0.0, 4).unwrap();
        let b = noise_texture(256, 256, 0.0, 5).unwrap();
        assert!(matches!(
            register_translation(&a, &b),
            Err(Error::RegistrationFailure { .. })
        ));
    }

    #[test]
    fn register_stack_undoes_shifts() {
        let t = texture(96, 6);
        let stack = vec![shift_image(&t, 3, 2), t.clone(), shift_image(&t, -4, 1)];
        let (aligned, regs) = register_stack(&stack, 1).unwrap();
        assert_eq!((regs[0].dx, regs[0].dy), (3, 2));
        assert_eq!((regs[2].dx, regs[2].dy), (-4, 1));
        let inner = |img: &Image| img.crop(8, 8, 80, 80).unwrap();
        assert_eq!(inner(&aligned[0]), inner(&t));
        assert_eq!(inner(&aligned[2]), inner(&t));
    }

    #[test]
    fn single_member_stack_is_identity() {
        let t = texture(100, 7);
        let fused = fuse_stack(std::slice::from_ref(&t), 64, 32).unwrap();
        let err = fused.image.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6);
    }

    #[test]
    fn ties_go_to_first_member() {
        let t = texture(96, 8);
        let fused = fuse_stack(&[t.clone(), t.clone()], 64, 32).unwrap();
        assert!(fused.selection.iter().all(|&i| i == 0));
    }

    #[test]
    fn empty_stack_rejected() {
        assert!(fuse_stack(&[], 64, 32).is_err());
        assert!(fuse_stack(&[texture(64, 1), texture(80, 1)], 64, 32).is_err());
    }

    #[test]
    fn complementary_halves_are_fused() {
        let t = texture(256, 9);
        let blurred = convolve(&t, &gaussian_kernel(3.0, None).unwrap());
        let a = Image::from_fn(256, 256, |x, y| if x < 128 { t.get(x, y, 0) } else { blurred.get(x, y, 0) });
        let b = Image::from_fn(256, 256, |x, y| if x < 128 { blurred.get(x, y, 0) } else { t.get(x, y, 0) });
        let fused = fuse_stack(&[a.clone(), b.clone()], 64, 32).unwrap();
        let mean_blur = |img: &Image| crate::blur::blur_map(img, 64, 32).unwrap().mean();
        assert!(mean_blur(&fused.image) <= mean_blur(&a).min(mean_blur(&b)) + 0.02);
    }
}

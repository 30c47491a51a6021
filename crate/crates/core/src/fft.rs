//! Thin 2D wrappers around `rustfft` for row-major real images.

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

fn transform(width: usize, height: usize, buf: &mut [Complex64], direction: FftDirection) {
    debug_assert_eq!(buf.len(), width * height);
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(width, direction);
    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(width) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let col_fft = planner.plan_fft(height, direction);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex64::default());
    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = buf[y * width + x];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for (y, c) in column.iter().enumerate() {
            buf[y * width + x] = *c;
        }
    }
}

/// Unnormalized forward transform, in place.
pub fn fft2(width: usize, height: usize, buf: &mut [Complex64]) {
    transform(width, height, buf, FftDirection::Forward);
}

/// Inverse transform scaled by `1 / (width * height)`, in place.
pub fn ifft2(width: usize, height: usize, buf: &mut [Complex64]) {
    transform(width, height, buf, FftDirection::Inverse);
    let scale = 1.0 / (width * height) as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn forward_real(width: usize, height: usize, plane: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(width, height, &mut buf);
    buf
}

/// Inverse transform keeping only the real part.
pub fn inverse_real(width: usize, height: usize, mut spectrum: Vec<Complex64>) -> Vec<f64> {
    ifft2(width, height, &mut spectrum);
    spectrum.into_iter().map(|c| c.re).collect()
}

/// Transfer function of a centered odd `ksize` x `ksize` stencil on a
/// `width` x `height` periodic grid.
///
/// The stencil center lands on index `(0, 0)`; taps that fall outside the
/// grid wrap around and accumulate.
pub fn transfer_function(weights: &[f64], ksize: usize, width: usize, height: usize) -> Vec<Complex64> {
    debug_assert_eq!(weights.len(), ksize * ksize);
    let r = (ksize / 2) as isize;
    let mut buf = vec![Complex64::default(); width * height];
    for row in 0..ksize {
        for col in 0..ksize {
            let w = weights[row * ksize + col];
            if w == 0.0 {
                continue;
            }
            let y = (row as isize - r).rem_euclid(height as isize) as usize;
            let x = (col as isize - r).rem_euclid(width as isize) as usize;
            buf[y * width + x].re += w;
        }
    }
    fft2(width, height, &mut buf);
    buf
}

/// Moves the zero-lag sample from index `(0, 0)` to `(width / 2, height / 2)`.
pub fn fftshift(width: usize, height: usize, data: &[f64]) -> Vec<f64> {
    let (sx, sy) = (width / 2, height / 2);
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        let ty = (y + sy) % height;
        for x in 0..width {
            let tx = (x + sx) % width;
            out[ty * width + tx] = data[y * width + x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_non_power_of_two() {
        let (w, h) = (6, 5);
        let plane: Vec<f64> = (0..w * h).map(|i| ((i * 7) % 11) as f64).collect();
        let back = inverse_real(w, h, forward_real(w, h, &plane));
        for (a, b) in plane.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dc_term_is_sum() {
        let plane = vec![0.5; 12];
        let spec = forward_real(4, 3, &plane);
        assert!((spec[0].re - 6.0).abs() < 1e-12);
        assert!(spec[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn delta_transfer_is_flat() {
        let tf = transfer_function(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 3, 8, 8);
        assert!(tf.iter().all(|c| (c.re - 1.0).abs() < 1e-12 && c.im.abs() < 1e-12));
    }

    #[test]
    fn shift_centers_origin() {
        let mut d = vec![0.0; 16];
        d[0] = 1.0;
        let s = fftshift(4, 4, &d);
        assert_eq!(s[2 * 4 + 2], 1.0);
    }
}

//! PNG / TIFF loading and saving with unit-interval normalization.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::{BlurMap, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

impl BitDepth {
    fn max(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedImage {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Loads an image and maps its samples to `[0, 1]`, returning the source bit depth.
pub fn load(path: impl AsRef<Path>) -> Result<(Image, BitDepth)> {
    let path = path.as_ref();
    let dynamic = image::open(path)?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let (channels, depth, data): (usize, BitDepth, Vec<f64>) = match dynamic {
        DynamicImage::ImageLuma8(buf) => (1, BitDepth::Eight, scale(buf.into_raw(), 255.0)),
        DynamicImage::ImageLuma16(buf) => (1, BitDepth::Sixteen, scale(buf.into_raw(), 65535.0)),
        DynamicImage::ImageRgb8(buf) => (3, BitDepth::Eight, scale(buf.into_raw(), 255.0)),
        DynamicImage::ImageRgb16(buf) => (3, BitDepth::Sixteen, scale(buf.into_raw(), 65535.0)),
        DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgba8(_)
        | DynamicImage::ImageRgba16(_)
        | DynamicImage::ImageRgba32F(_) => return Err(unsupported(path, "alpha channels are not supported")),
        other => {
            let buf = other.to_rgb16();
            (3, BitDepth::Sixteen, scale(buf.into_raw(), 65535.0))
        }
    };
    Ok((Image::new(w, h, channels, data)?, depth))
}

fn scale<T: Into<f64> + Copy>(raw: Vec<T>, max: f64) -> Vec<f64> {
    raw.into_iter().map(|v| v.into() / max).collect()
}

fn quantize(v: f64, depth: BitDepth) -> f64 {
    (v.clamp(0.0, 1.0) * depth.max()).round()
}

/// Saves with the format chosen from the file extension (`.png`, `.tif`, `.tiff`).
pub fn save(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    if !matches!(ext.as_str(), "png" | "tif" | "tiff") {
        return Err(unsupported(path, format!("unknown extension '{ext}'")));
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = match (img.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, to_u8(img)).expect("buffer size"),
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, to_u16(img)).expect("buffer size"),
        ),
        (_, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, to_u8(img)).expect("buffer size"),
        ),
        (_, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, to_u16(img)).expect("buffer size"),
        ),
    };
    dynamic.save(path)?;
    Ok(())
}

fn to_u8(img: &Image) -> Vec<u8> {
    img.data()
        .iter()
        .map(|&v| quantize(v, BitDepth::Eight) as u8)
        .collect()
}

fn to_u16(img: &Image) -> Vec<u16> {
    img.data()
        .iter()
        .map(|&v| quantize(v, BitDepth::Sixteen) as u16)
        .collect()
}

/// Writes a blur map as 16-bit grayscale, `round(blur * 65535)`.
pub fn save_blur_map(map: &BlurMap, path: impl AsRef<Path>) -> Result<()> {
    save(&map.to_image(), path, BitDepth::Sixteen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(5, 4, |x, y| (x * 4 + y) as f64 / 19.0);
        save(&img, &path, BitDepth::Sixteen).unwrap();
        let (back, depth) = load(&path).unwrap();
        assert_eq!(depth, BitDepth::Sixteen);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn tiff_rgb_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.tiff");
        let data: Vec<f64> = (0..36).map(|i| i as f64 / 35.0).collect();
        let img = Image::new(4, 3, 3, data).unwrap();
        save(&img, &path, BitDepth::Eight).unwrap();
        let (back, depth) = load(&path).unwrap();
        assert_eq!((depth, back.channels()), (BitDepth::Eight, 3));
        assert!((back.get(3, 2, 2) - 1.0).abs() < 1e-12);
        assert_eq!(back.get(1, 0, 0) * 255.0, (3.0f64 / 35.0 * 255.0).round());
    }

    #[test]
    fn blur_map_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let map = BlurMap::new(2, 1, vec![0.25, 1.0]).unwrap();
        save_blur_map(&map, &path).unwrap();
        let raw = image::open(&path).unwrap().into_luma16().into_raw();
        assert_eq!(raw, vec![16384, 65535]);
    }

    #[test]
    fn missing_file_errors() {
        assert!(load("/nonexistent/definitely.png").is_err());
    }

    #[test]
    fn unknown_extension_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::constant(2, 2, 0.5);
        assert!(save(&img, dir.path().join("x.bmp"), BitDepth::Eight).is_err());
    }
}

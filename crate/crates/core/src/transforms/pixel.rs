//! Intensity-only operations. None of these touch the mask.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, ExtendedColorType, ImageReader};

use crate::error::{Error, Result};
use crate::raster::{Image, Raster};
use crate::rng::RngStream;

use super::filters::to_u8;

fn map_lut(image: &Image, lut: &[u8; 256]) -> Image {
    let px = image.pixels().iter().map(|&v| lut[v as usize]).collect();
    Image::new(image.width(), image.height(), px).expect("same dims")
}

fn lut_from(f: impl Fn(f64) -> f64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        *slot = to_u8(f(v as f64));
    }
    lut
}

/// Keeps the `bits` most significant bits (1..=8).
pub fn posterize(image: &Image, bits: u8) -> Result<Image> {
    if !(1..=8).contains(&bits) {
        return Err(Error::InvalidSpec(format!("posterize bits must be 1..=8, got {bits}")));
    }
    let keep = !((1u16 << (8 - bits)) - 1) as u8;
    let px = image.pixels().iter().map(|&v| v & keep).collect();
    Image::new(image.width(), image.height(), px)
}

/// `v * (1 + contrast) + brightness * 255`.
pub fn brightness_contrast(image: &Image, brightness: f64, contrast: f64) -> Image {
    let alpha = 1.0 + contrast;
    let beta = brightness * 255.0;
    map_lut(image, &lut_from(|v| v * alpha + beta))
}

pub fn gamma(image: &Image, gamma: f64) -> Result<Image> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidSpec(format!("gamma must be positive, got {gamma}")));
    }
    Ok(map_lut(image, &lut_from(|v| 255.0 * (v / 255.0).powf(gamma))))
}

/// Grayscale snow: intensities below `snow_point * 255 / 2 + 255 / 3` are
/// multiplied by `brightness_coeff` and saturated.
pub fn snow(image: &Image, snow_point: f64, brightness_coeff: f64) -> Image {
    let threshold = snow_point * 255.0 / 2.0 + 255.0 / 3.0;
    map_lut(
        image,
        &lut_from(|v| if v < threshold { v * brightness_coeff } else { v }),
    )
}

fn fill_rect(px: &mut [u8], width: usize, height: usize, x0: usize, y0: usize, w: usize, h: usize) {
    for y in y0..(y0 + h).min(height) {
        let row = &mut px[y * width..(y + 1) * width];
        row[x0.min(width)..(x0 + w).min(width)].fill(0);
    }
}

/// Zeroes `holes` random `hole_size x hole_size` squares. Each hole draws
/// its x then y top-left corner uniformly so the square lies inside the image.
pub fn coarse_dropout(image: &Image, holes: usize, hole_size: usize, rng: &mut RngStream) -> Result<Image> {
    let (w, h) = image.dims();
    if holes == 0 {
        return Ok(image.clone());
    }
    if hole_size == 0 || hole_size >= w.min(h) {
        return Err(Error::InvalidSpec(format!(
            "hole_size {hole_size} must be in 1..{}",
            w.min(h)
        )));
    }
    let mut px = image.pixels().to_vec();
    for _ in 0..holes {
        let x0 = rng.int_inclusive(0, (w - hole_size) as i64) as usize;
        let y0 = rng.int_inclusive(0, (h - hole_size) as i64) as usize;
        fill_rect(&mut px, w, h, x0, y0, hole_size, hole_size);
    }
    Image::new(w, h, px)
}

/// Zeroes a `round(ratio * unit)` square at the same offset inside every
/// `unit x unit` cell of a regular grid.
pub fn grid_dropout(image: &Image, ratio: f64, unit: usize, offset: (usize, usize)) -> Result<Image> {
    if !(0.0..1.0).contains(&ratio) || unit == 0 {
        return Err(Error::InvalidSpec(format!(
            "grid dropout needs ratio in [0, 1) and unit > 0, got {ratio}, {unit}"
        )));
    }
    let hole = (ratio * unit as f64).round() as usize;
    if hole == 0 {
        return Ok(image.clone());
    }
    let (w, h) = image.dims();
    let mut px = image.pixels().to_vec();
    for gy in (0..h).step_by(unit) {
        for gx in (0..w).step_by(unit) {
            fill_rect(&mut px, w, h, gx + offset.0, gy + offset.1, hole, hole);
        }
    }
    Image::new(w, h, px)
}

/// Lossy JPEG encode/decode cycle at `quality` (1..=100).
pub fn jpeg_roundtrip(image: &Image, quality: u8) -> Result<Image> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidSpec(format!("jpeg quality must be 1..=100, got {quality}")));
    }
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(
            image.pixels(),
            image.width() as u32,
            image.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| Error::Encode(e.to_string()))?;
    let decoded = ImageReader::with_format(Cursor::new(buf), image::ImageFormat::Jpeg)
        .decode()
        .map_err(|e| Error::Encode(e.to_string()))?;
    let gray = match decoded {
        DynamicImage::ImageLuma8(g) => g,
        other => other.to_luma8(),
    };
    Image::new(image.width(), image.height(), gray.into_raw())
}

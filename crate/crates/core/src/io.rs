//! Lossless single-channel PNG I/O with fixed encoder settings.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use crate::datasetprep::LabelMap;
use crate::error::{Error, Result};
use crate::raster::{Image, Mask, Raster, Sample};

/// Decodes an 8-bit grayscale raster; any other pixel format is rejected.
pub fn decode_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let img = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            Ok((w as usize, h as usize, buf.into_raw()))
        }
        other => Err(decode_err(format!(
            "expected 8-bit grayscale, found {:?}",
            other.color()
        ))),
    }
}

pub fn load_image(path: &Path) -> Result<Image> {
    let (w, h, px) = decode_gray(path)?;
    Image::new(w, h, px)
}

/// Mask with raw (untranslated) values.
pub fn load_mask_raw(path: &Path) -> Result<Mask> {
    let (w, h, px) = decode_gray(path)?;
    Mask::new(w, h, px)
}

pub fn encode_png<R: Raster>(raster: &R) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PngEncoder::new_with_quality(&mut buf, CompressionType::Default, FilterType::Adaptive)
        .write_image(
            raster.data(),
            raster.width() as u32,
            raster.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(buf)
}

pub fn save_raster<R: Raster>(raster: &R, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let bytes = encode_png(raster)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads an image/mask pair and translates mask values through `label_map`.
/// The sample id is the image file stem.
pub fn load_sample(image_path: &Path, mask_path: &Path, label_map: &LabelMap) -> Result<Sample> {
    let image = load_image(image_path)?;
    let raw = load_mask_raw(mask_path)?;
    if image.dims() != raw.dims() {
        return Err(Error::DimensionMismatch {
            left: image.dims(),
            right: raw.dims(),
        });
    }
    let mask = label_map.translate(&raw)?;
    let sample_id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Sample::new(image, mask, label_map.dataset_id.clone(), sample_id)
}

/// Writes both rasters as they are (mask values are not re-encoded).
pub fn save_sample(sample: &Sample, image_path: &Path, mask_path: &Path) -> Result<()> {
    save_raster(&sample.image, image_path)?;
    save_raster(&sample.mask, mask_path)
}

//! Image, mask and sample types shared by every pipeline stage.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Common access to row-major 8-bit single-channel buffers.
pub trait Raster: Sized {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn data(&self) -> &[u8];
    fn data_mut(&mut self) -> &mut [u8];
    fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self>;

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    #[inline]
    fn get(&self, x: usize, y: usize) -> u8 {
        self.data()[y * self.width() + x]
    }

    #[inline]
    fn set(&mut self, x: usize, y: usize, v: u8) {
        let w = self.width();
        self.data_mut()[y * w + x] = v;
    }
}

fn check_buffer(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidRaster(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidRaster(format!(
            "buffer length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// 8-bit grayscale intensities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        check_buffer(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

impl Raster for Image {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn data(&self) -> &[u8] {
        &self.pixels
    }
    fn data_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }
    fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, data)
    }
}

/// Per-pixel class identifiers. 0 is always background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        check_buffer(width, height, labels.len())?;
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn background(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    /// Distinct label values present in the mask.
    pub fn label_set(&self) -> BTreeSet<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&v| seen[v as usize]).collect()
    }

    pub fn count_nonzero(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.labels.iter().all(|&l| l <= 1)
    }
}

impl Raster for Mask {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn data(&self) -> &[u8] {
        &self.labels
    }
    fn data_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }
    fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, data)
    }
}

/// Which label vocabulary a sample's mask is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LabelSpace {
    /// Canonical per-dataset class ids.
    #[default]
    Dataset,
    /// 0 = background, 1 = lesion.
    Binary,
}

/// An image/mask pair with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sample {
    pub image: Image,
    pub mask: Mask,
    pub dataset_id: String,
    pub sample_id: String,
    pub label_space: LabelSpace,
}

impl Sample {
    pub fn new(
        image: Image,
        mask: Mask,
        dataset_id: impl Into<String>,
        sample_id: impl Into<String>,
    ) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(Error::DimensionMismatch {
                left: image.dims(),
                right: mask.dims(),
            });
        }
        Ok(Self {
            image,
            mask,
            dataset_id: dataset_id.into(),
            sample_id: sample_id.into(),
            label_space: LabelSpace::Dataset,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    /// Same provenance, new rasters.
    pub(crate) fn with_rasters(&self, image: Image, mask: Mask) -> Self {
        debug_assert_eq!(image.dims(), mask.dims());
        Self {
            image,
            mask,
            dataset_id: self.dataset_id.clone(),
            sample_id: self.sample_id.clone(),
            label_space: self.label_space,
        }
    }

    pub(crate) fn with_image(&self, image: Image) -> Self {
        self.with_rasters(image, self.mask.clone())
    }
}

//! The twenty traditional augmentation techniques, applied jointly to image
//! and mask.
//!
//! Spatial kinds build a single [`GeometricMap`] per application and warp the
//! image (bilinear) and the mask (nearest neighbour) with it. Pixel kinds
//! only rewrite intensities; the mask is returned untouched.
//!
//! Every kind draws its parameters from the supplied [`RngStream`] first, in
//! the field order of its parameter struct, then any per-pixel randomness.

pub mod clahe;
pub mod filters;
pub mod geometry;
pub mod pixel;

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster, Sample};
use crate::rng::RngStream;

pub use clahe::clahe;
pub use geometry::{FlipAxis, GeometricMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    #[serde(rename = "CLAHE")]
    Clahe,
    CoarseDropout,
    ElasticTransform,
    Emboss,
    Flip,
    GaussianBlur,
    GridDistortion,
    GridDropout,
    ImageCompression,
    MedianBlur,
    OpticalDistortion,
    PiecewiseAffine,
    Posterize,
    RandomBrightnessContrast,
    RandomCrop,
    RandomGamma,
    RandomSnow,
    Rotate,
    Sharpen,
    ShiftScaleRotate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Spatial,
    Pixel,
}

impl TransformKind {
    pub const ALL: [TransformKind; 20] = [
        TransformKind::Clahe,
        TransformKind::CoarseDropout,
        TransformKind::ElasticTransform,
        TransformKind::Emboss,
        TransformKind::Flip,
        TransformKind::GaussianBlur,
        TransformKind::GridDistortion,
        TransformKind::GridDropout,
        TransformKind::ImageCompression,
        TransformKind::MedianBlur,
        TransformKind::OpticalDistortion,
        TransformKind::PiecewiseAffine,
        TransformKind::Posterize,
        TransformKind::RandomBrightnessContrast,
        TransformKind::RandomCrop,
        TransformKind::RandomGamma,
        TransformKind::RandomSnow,
        TransformKind::Rotate,
        TransformKind::Sharpen,
        TransformKind::ShiftScaleRotate,
    ];

    pub fn category(self) -> Category {
        use TransformKind::*;
        match self {
            ElasticTransform | Flip | GridDistortion | OpticalDistortion | PiecewiseAffine
            | RandomCrop | Rotate | ShiftScaleRotate => Category::Spatial,
            _ => Category::Pixel,
        }
    }

    pub fn name(self) -> &'static str {
        use TransformKind::*;
        match self {
            Clahe => "CLAHE",
            CoarseDropout => "CoarseDropout",
            ElasticTransform => "ElasticTransform",
            Emboss => "Emboss",
            Flip => "Flip",
            GaussianBlur => "GaussianBlur",
            GridDistortion => "GridDistortion",
            GridDropout => "GridDropout",
            ImageCompression => "ImageCompression",
            MedianBlur => "MedianBlur",
            OpticalDistortion => "OpticalDistortion",
            PiecewiseAffine => "PiecewiseAffine",
            Posterize => "Posterize",
            RandomBrightnessContrast => "RandomBrightnessContrast",
            RandomCrop => "RandomCrop",
            RandomGamma => "RandomGamma",
            RandomSnow => "RandomSnow",
            Rotate => "Rotate",
            Sharpen => "Sharpen",
            ShiftScaleRotate => "ShiftScaleRotate",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidSpec(format!("unknown transform kind {s:?}")))
    }
}

/// Closed interval `[lo, hi]` for a uniform draw; `lo == hi` pins the value.
pub type Range = [f64; 2];

fn check_range(name: &str, r: Range, min: f64, max: f64) -> Result<()> {
    let [lo, hi] = r;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < min || hi > max {
        return Err(Error::InvalidSpec(format!(
            "{name} range [{lo}, {hi}] must be ordered within [{min}, {max}]"
        )));
    }
    Ok(())
}

fn draw(rng: &mut RngStream, r: Range) -> f64 {
    rng.uniform(r[0], r[1])
}

fn check_kernels(name: &str, ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.iter().any(|&k| k % 2 == 0 || k > 31) {
        return Err(Error::InvalidSpec(format!("{name}: kernel sizes must be odd and <= 31")));
    }
    Ok(())
}

macro_rules! params_struct {
    ($(#[$m:meta])* $name:ident { $($field:ident : $ty:ty = $default:expr),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $(pub $field: $ty,)*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }
    };
}

params_struct!(
    /// `clip_limit` drawn uniformly; `tile_grid` is (rows, cols).
    ClaheParams { clip_limit: Range = [1.0, 4.0], tile_grid: (usize, usize) = (8, 8) }
);
params_struct!(CoarseDropoutParams { holes: usize = 8, hole_size: usize = 8 });
params_struct!(ElasticParams { alpha: f64 = 34.0, sigma: f64 = 4.0 });
params_struct!(EmbossParams { alpha: Range = [0.2, 0.5], strength: Range = [0.2, 0.5] });
params_struct!(
    /// The axis is drawn uniformly from `axes`.
    FlipParams {
        axes: Vec<FlipAxis> = vec![FlipAxis::Horizontal, FlipAxis::Vertical, FlipAxis::Both],
    }
);
params_struct!(
    /// Kernel size drawn uniformly from the list; sigma follows from the size.
    GaussianBlurParams { kernel_sizes: Vec<usize> = vec![3, 5, 7] }
);
params_struct!(GridDistortionParams { num_steps: usize = 5, distort_limit: Range = [-0.3, 0.3] });
params_struct!(GridDropoutParams { ratio: f64 = 0.5, unit_size: usize = 32, random_offset: bool = false });
params_struct!(
    /// JPEG quality, integer drawn uniformly from `lo..=hi`.
    ImageCompressionParams { quality: (u8, u8) = (99, 100) }
);
params_struct!(MedianBlurParams { kernel_sizes: Vec<usize> = vec![3, 5] });
params_struct!(OpticalDistortionParams { distort_limit: Range = [-0.05, 0.05], shift_limit: Range = [-0.05, 0.05] });
params_struct!(
    /// Lattice jitter std is `scale` times the image side, per axis.
    PiecewiseAffineParams { rows: usize = 4, cols: usize = 4, scale: f64 = 0.03 }
);
params_struct!(PosterizeParams { bits: u8 = 4 });
params_struct!(BrightnessContrastParams { brightness: Range = [-0.2, 0.2], contrast: Range = [-0.2, 0.2] });
params_struct!(
    /// Crop window in pixels, rescaled back to the input size.
    RandomCropParams { width: usize = 410, height: usize = 410 }
);
params_struct!(GammaParams { gamma: Range = [0.8, 1.2] });
params_struct!(SnowParams { snow_point: Range = [0.1, 0.3], brightness_coeff: f64 = 2.5 });
params_struct!(
    /// Degrees; positive angles turn the content clockwise on screen.
    RotateParams { angle: Range = [-90.0, 90.0] }
);
params_struct!(SharpenParams { alpha: Range = [0.2, 0.5], lightness: Range = [0.5, 1.0] });
params_struct!(
    /// `shift` is a fraction of the side (drawn per axis), `angle` in degrees.
    ShiftScaleRotateParams {
        shift: Range = [-0.0625, 0.0625],
        scale: Range = [0.9, 1.1],
        angle: Range = [-45.0, 45.0],
    }
);

/// Frozen parameter record, one variant per kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformParams {
    Clahe(ClaheParams),
    CoarseDropout(CoarseDropoutParams),
    ElasticTransform(ElasticParams),
    Emboss(EmbossParams),
    Flip(FlipParams),
    GaussianBlur(GaussianBlurParams),
    GridDistortion(GridDistortionParams),
    GridDropout(GridDropoutParams),
    ImageCompression(ImageCompressionParams),
    MedianBlur(MedianBlurParams),
    OpticalDistortion(OpticalDistortionParams),
    PiecewiseAffine(PiecewiseAffineParams),
    Posterize(PosterizeParams),
    RandomBrightnessContrast(BrightnessContrastParams),
    RandomCrop(RandomCropParams),
    RandomGamma(GammaParams),
    RandomSnow(SnowParams),
    Rotate(RotateParams),
    Sharpen(SharpenParams),
    ShiftScaleRotate(ShiftScaleRotateParams),
}

fn from_value<T: DeserializeOwned>(kind: TransformKind, v: serde_json::Value) -> Result<T> {
    let v = if v.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        v
    };
    serde_json::from_value(v).map_err(|e| Error::InvalidSpec(format!("{kind} params: {e}")))
}

impl TransformParams {
    pub fn default_for(kind: TransformKind) -> Self {
        Self::from_json(kind, serde_json::Value::Null).expect("defaults deserialize")
    }

    /// Kind-specific params from JSON; omitted fields take ledger defaults.
    pub fn from_json(kind: TransformKind, v: serde_json::Value) -> Result<Self> {
        use TransformKind as K;
        Ok(match kind {
            K::Clahe => Self::Clahe(from_value(kind, v)?),
            K::CoarseDropout => Self::CoarseDropout(from_value(kind, v)?),
            K::ElasticTransform => Self::ElasticTransform(from_value(kind, v)?),
            K::Emboss => Self::Emboss(from_value(kind, v)?),
            K::Flip => Self::Flip(from_value(kind, v)?),
            K::GaussianBlur => Self::GaussianBlur(from_value(kind, v)?),
            K::GridDistortion => Self::GridDistortion(from_value(kind, v)?),
            K::GridDropout => Self::GridDropout(from_value(kind, v)?),
            K::ImageCompression => Self::ImageCompression(from_value(kind, v)?),
            K::MedianBlur => Self::MedianBlur(from_value(kind, v)?),
            K::OpticalDistortion => Self::OpticalDistortion(from_value(kind, v)?),
            K::PiecewiseAffine => Self::PiecewiseAffine(from_value(kind, v)?),
            K::Posterize => Self::Posterize(from_value(kind, v)?),
            K::RandomBrightnessContrast => Self::RandomBrightnessContrast(from_value(kind, v)?),
            K::RandomCrop => Self::RandomCrop(from_value(kind, v)?),
            K::RandomGamma => Self::RandomGamma(from_value(kind, v)?),
            K::RandomSnow => Self::RandomSnow(from_value(kind, v)?),
            K::Rotate => Self::Rotate(from_value(kind, v)?),
            K::Sharpen => Self::Sharpen(from_value(kind, v)?),
            K::ShiftScaleRotate => Self::ShiftScaleRotate(from_value(kind, v)?),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        use TransformParams as P;
        let v = match self {
            P::Clahe(p) => serde_json::to_value(p),
            P::CoarseDropout(p) => serde_json::to_value(p),
            P::ElasticTransform(p) => serde_json::to_value(p),
            P::Emboss(p) => serde_json::to_value(p),
            P::Flip(p) => serde_json::to_value(p),
            P::GaussianBlur(p) => serde_json::to_value(p),
            P::GridDistortion(p) => serde_json::to_value(p),
            P::GridDropout(p) => serde_json::to_value(p),
            P::ImageCompression(p) => serde_json::to_value(p),
            P::MedianBlur(p) => serde_json::to_value(p),
            P::OpticalDistortion(p) => serde_json::to_value(p),
            P::PiecewiseAffine(p) => serde_json::to_value(p),
            P::Posterize(p) => serde_json::to_value(p),
            P::RandomBrightnessContrast(p) => serde_json::to_value(p),
            P::RandomCrop(p) => serde_json::to_value(p),
            P::RandomGamma(p) => serde_json::to_value(p),
            P::RandomSnow(p) => serde_json::to_value(p),
            P::Rotate(p) => serde_json::to_value(p),
            P::Sharpen(p) => serde_json::to_value(p),
            P::ShiftScaleRotate(p) => serde_json::to_value(p),
        };
        v.expect("params serialize")
    }

    pub fn kind(&self) -> TransformKind {
        use TransformKind as K;
        use TransformParams as P;
        match self {
            P::Clahe(_) => K::Clahe,
            P::CoarseDropout(_) => K::CoarseDropout,
            P::ElasticTransform(_) => K::ElasticTransform,
            P::Emboss(_) => K::Emboss,
            P::Flip(_) => K::Flip,
            P::GaussianBlur(_) => K::GaussianBlur,
            P::GridDistortion(_) => K::GridDistortion,
            P::GridDropout(_) => K::GridDropout,
            P::ImageCompression(_) => K::ImageCompression,
            P::MedianBlur(_) => K::MedianBlur,
            P::OpticalDistortion(_) => K::OpticalDistortion,
            P::PiecewiseAffine(_) => K::PiecewiseAffine,
            P::Posterize(_) => K::Posterize,
            P::RandomBrightnessContrast(_) => K::RandomBrightnessContrast,
            P::RandomCrop(_) => K::RandomCrop,
            P::RandomGamma(_) => K::RandomGamma,
            P::RandomSnow(_) => K::RandomSnow,
            P::Rotate(_) => K::Rotate,
            P::Sharpen(_) => K::Sharpen,
            P::ShiftScaleRotate(_) => K::ShiftScaleRotate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use TransformParams as P;
        match self {
            P::Clahe(p) => {
                check_range("clip_limit", p.clip_limit, 1.0, 1e6)?;
                if p.tile_grid.0 == 0 || p.tile_grid.1 == 0 {
                    return Err(Error::InvalidSpec("CLAHE tile grid must be non-zero".into()));
                }
            }
            P::CoarseDropout(p) => {
                if p.holes > 0 && p.hole_size == 0 {
                    return Err(Error::InvalidSpec("hole_size must be positive".into()));
                }
            }
            P::ElasticTransform(p) => {
                if !(p.alpha.is_finite() && p.sigma.is_finite()) || p.alpha < 0.0 || p.sigma <= 0.0 {
                    return Err(Error::InvalidSpec("elastic needs alpha >= 0, sigma > 0".into()));
                }
            }
            P::Emboss(p) => {
                check_range("alpha", p.alpha, 0.0, 1.0)?;
                check_range("strength", p.strength, 0.0, 10.0)?;
            }
            P::Flip(p) => {
                if p.axes.is_empty() {
                    return Err(Error::InvalidSpec("flip needs at least one axis".into()));
                }
            }
            P::GaussianBlur(p) => check_kernels("GaussianBlur", &p.kernel_sizes)?,
            P::GridDistortion(p) => {
                if p.num_steps == 0 {
                    return Err(Error::InvalidSpec("num_steps must be positive".into()));
                }
                check_range("distort_limit", p.distort_limit, -0.99, 10.0)?;
            }
            P::GridDropout(p) => {
                if !(0.0..1.0).contains(&p.ratio) || p.unit_size == 0 {
                    return Err(Error::InvalidSpec("grid dropout needs ratio in [0,1), unit > 0".into()));
                }
            }
            P::ImageCompression(p) => {
                let (lo, hi) = p.quality;
                if lo == 0 || hi > 100 || lo > hi {
                    return Err(Error::InvalidSpec("quality must be ordered within 1..=100".into()));
                }
            }
            P::MedianBlur(p) => check_kernels("MedianBlur", &p.kernel_sizes)?,
            P::OpticalDistortion(p) => {
                check_range("distort_limit", p.distort_limit, -1.0, 1.0)?;
                check_range("shift_limit", p.shift_limit, -0.5, 0.5)?;
            }
            P::PiecewiseAffine(p) => {
                if p.rows < 2 || p.cols < 2 || !(p.scale.is_finite() && p.scale >= 0.0) {
                    return Err(Error::InvalidSpec("lattice >= 2x2 and scale >= 0 required".into()));
                }
            }
            P::Posterize(p) => {
                if !(1..=8).contains(&p.bits) {
                    return Err(Error::InvalidSpec("posterize bits must be 1..=8".into()));
                }
            }
            P::RandomBrightnessContrast(p) => {
                check_range("brightness", p.brightness, -1.0, 1.0)?;
                check_range("contrast", p.contrast, -1.0, 10.0)?;
            }
            P::RandomCrop(p) => {
                if p.width == 0 || p.height == 0 {
                    return Err(Error::InvalidSpec("crop size must be positive".into()));
                }
            }
            P::RandomGamma(p) => check_range("gamma", p.gamma, 1e-3, 100.0)?,
            P::RandomSnow(p) => {
                check_range("snow_point", p.snow_point, 0.0, 1.0)?;
                if !(p.brightness_coeff.is_finite() && p.brightness_coeff >= 0.0) {
                    return Err(Error::InvalidSpec("brightness_coeff must be >= 0".into()));
                }
            }
            P::Rotate(p) => check_range("angle", p.angle, -360.0, 360.0)?,
            P::Sharpen(p) => {
                check_range("alpha", p.alpha, 0.0, 1.0)?;
                check_range("lightness", p.lightness, 0.0, 10.0)?;
            }
            P::ShiftScaleRotate(p) => {
                check_range("shift", p.shift, -1.0, 1.0)?;
                check_range("scale", p.scale, 1e-3, 100.0)?;
                check_range("angle", p.angle, -360.0, 360.0)?;
            }
        }
        Ok(())
    }
}

/// A validated transform kind with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    params: TransformParams,
}

impl TransformSpec {
    pub fn new(params: TransformParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn default_for(kind: TransformKind) -> Self {
        Self::new(TransformParams::default_for(kind)).expect("ledger defaults validate")
    }

    pub fn from_json(kind: TransformKind, params: serde_json::Value) -> Result<Self> {
        Self::new(TransformParams::from_json(kind, params)?)
    }

    pub fn kind(&self) -> TransformKind {
        self.params.kind()
    }

    pub fn params(&self) -> &TransformParams {
        &self.params
    }
}

/// Parameters under which `kind` leaves a `width x height` sample unchanged,
/// or `None` for kinds that always alter it (Flip, CLAHE, ImageCompression).
pub fn neutral_params(kind: TransformKind, width: usize, height: usize) -> Option<TransformParams> {
    use TransformKind as K;
    use TransformParams as P;
    let zero = [0.0, 0.0];
    Some(match kind {
        K::Clahe | K::Flip | K::ImageCompression => return None,
        K::CoarseDropout => P::CoarseDropout(CoarseDropoutParams { holes: 0, ..Default::default() }),
        K::ElasticTransform => P::ElasticTransform(ElasticParams { alpha: 0.0, ..Default::default() }),
        K::Emboss => P::Emboss(EmbossParams { alpha: zero, ..Default::default() }),
        K::GaussianBlur => P::GaussianBlur(GaussianBlurParams { kernel_sizes: vec![1] }),
        K::GridDistortion => P::GridDistortion(GridDistortionParams { distort_limit: zero, ..Default::default() }),
        K::GridDropout => P::GridDropout(GridDropoutParams { ratio: 0.0, ..Default::default() }),
        K::MedianBlur => P::MedianBlur(MedianBlurParams { kernel_sizes: vec![1] }),
        K::OpticalDistortion => P::OpticalDistortion(OpticalDistortionParams {
            distort_limit: zero,
            shift_limit: zero,
        }),
        K::PiecewiseAffine => P::PiecewiseAffine(PiecewiseAffineParams { scale: 0.0, ..Default::default() }),
        K::Posterize => P::Posterize(PosterizeParams { bits: 8 }),
        K::RandomBrightnessContrast => P::RandomBrightnessContrast(BrightnessContrastParams {
            brightness: zero,
            contrast: zero,
        }),
        K::RandomCrop => P::RandomCrop(RandomCropParams { width, height }),
        K::RandomGamma => P::RandomGamma(GammaParams { gamma: [1.0, 1.0] }),
        K::RandomSnow => P::RandomSnow(SnowParams { brightness_coeff: 1.0, ..Default::default() }),
        K::Rotate => P::Rotate(RotateParams { angle: zero }),
        K::Sharpen => P::Sharpen(SharpenParams { alpha: zero, ..Default::default() }),
        K::ShiftScaleRotate => P::ShiftScaleRotate(ShiftScaleRotateParams {
            shift: zero,
            scale: [1.0, 1.0],
            angle: zero,
        }),
    })
}

/// Result of one application, with the warp for spatial kinds.
#[derive(Debug, Clone)]
pub struct Applied {
    pub sample: Sample,
    pub map: Option<GeometricMap>,
}

pub fn apply_transform(sample: &Sample, spec: &TransformSpec, rng: &mut RngStream) -> Result<Sample> {
    apply_transform_traced(sample, spec, rng).map(|a| a.sample)
}

/// Like [`apply_transform`] but also returns the geometric map that was
/// applied to both rasters (spatial kinds only).
pub fn apply_transform_traced(
    sample: &Sample,
    spec: &TransformSpec,
    rng: &mut RngStream,
) -> Result<Applied> {
    use TransformParams as P;
    let (w, h) = sample.dims();
    let img = &sample.image;
    let pixel_only = |image| {
        Ok(Applied {
            sample: sample.with_image(image),
            map: None,
        })
    };
    let map = match spec.params() {
        P::Clahe(p) => {
            let clip = draw(rng, p.clip_limit);
            return pixel_only(clahe(img, clip, p.tile_grid)?);
        }
        P::CoarseDropout(p) => {
            return pixel_only(pixel::coarse_dropout(img, p.holes, p.hole_size, rng)?);
        }
        P::Emboss(p) => {
            let alpha = draw(rng, p.alpha);
            let strength = draw(rng, p.strength);
            return pixel_only(filters::emboss(img, alpha, strength));
        }
        P::GaussianBlur(p) => {
            let k = p.kernel_sizes[rng.index(p.kernel_sizes.len())];
            return pixel_only(filters::gaussian_blur(img, k)?);
        }
        P::GridDropout(p) => {
            let hole = (p.ratio * p.unit_size as f64).round() as usize;
            let offset = if p.random_offset && hole < p.unit_size {
                let span = (p.unit_size - hole) as i64;
                (
                    rng.int_inclusive(0, span) as usize,
                    rng.int_inclusive(0, span) as usize,
                )
            } else {
                (0, 0)
            };
            return pixel_only(pixel::grid_dropout(img, p.ratio, p.unit_size, offset)?);
        }
        P::ImageCompression(p) => {
            let q = rng.int_inclusive(i64::from(p.quality.0), i64::from(p.quality.1)) as u8;
            return pixel_only(pixel::jpeg_roundtrip(img, q)?);
        }
        P::MedianBlur(p) => {
            let k = p.kernel_sizes[rng.index(p.kernel_sizes.len())];
            return pixel_only(filters::median_blur(img, k)?);
        }
        P::Posterize(p) => return pixel_only(pixel::posterize(img, p.bits)?),
        P::RandomBrightnessContrast(p) => {
            let b = draw(rng, p.brightness);
            let c = draw(rng, p.contrast);
            return pixel_only(pixel::brightness_contrast(img, b, c));
        }
        P::RandomGamma(p) => {
            let g = draw(rng, p.gamma);
            return pixel_only(pixel::gamma(img, g)?);
        }
        P::RandomSnow(p) => {
            let sp = draw(rng, p.snow_point);
            return pixel_only(pixel::snow(img, sp, p.brightness_coeff));
        }
        P::Sharpen(p) => {
            let alpha = draw(rng, p.alpha);
            let lightness = draw(rng, p.lightness);
            return pixel_only(filters::sharpen(img, alpha, lightness));
        }

        P::ElasticTransform(p) => geometry::elastic_map(w, h, p.alpha, p.sigma, rng)?,
        P::Flip(p) => geometry::flip_map(w, h, p.axes[rng.index(p.axes.len())]),
        P::GridDistortion(p) => {
            let xs: Vec<f64> = (0..p.num_steps).map(|_| draw(rng, p.distort_limit)).collect();
            let ys: Vec<f64> = (0..p.num_steps).map(|_| draw(rng, p.distort_limit)).collect();
            geometry::grid_distortion_map(w, h, &xs, &ys)?
        }
        P::OpticalDistortion(p) => {
            let k = draw(rng, p.distort_limit);
            let dx = (draw(rng, p.shift_limit) * w as f64).round();
            let dy = (draw(rng, p.shift_limit) * h as f64).round();
            geometry::optical_distortion_map(w, h, k, dx, dy)?
        }
        P::PiecewiseAffine(p) => {
            let sx = p.scale * w as f64;
            let sy = p.scale * h as f64;
            let disp: Vec<(f64, f64)> = (0..p.rows * p.cols)
                .map(|_| (rng.normal(0.0, sx), rng.normal(0.0, sy)))
                .collect();
            geometry::piecewise_affine_map(w, h, p.rows, p.cols, &disp)?
        }
        P::RandomCrop(p) => {
            if p.width > w || p.height > h {
                return Err(Error::TooSmall {
                    width: w,
                    height: h,
                    min_width: p.width,
                    min_height: p.height,
                });
            }
            let x0 = rng.int_inclusive(0, (w - p.width) as i64) as usize;
            let y0 = rng.int_inclusive(0, (h - p.height) as i64) as usize;
            geometry::crop_rescale_map(w, h, x0, y0, p.width, p.height)?
        }
        P::Rotate(p) => geometry::rotate_map(w, h, draw(rng, p.angle))?,
        P::ShiftScaleRotate(p) => {
            let sx = draw(rng, p.shift);
            let sy = draw(rng, p.shift);
            let scale = draw(rng, p.scale);
            let angle = draw(rng, p.angle);
            geometry::affine_map(w, h, sx, sy, scale, angle)?
        }
    };
    let image = map.warp_image(img)?;
    let mask = map.warp_mask(&sample.mask)?;
    Ok(Applied {
        sample: sample.with_rasters(image, mask),
        map: Some(map),
    })
}

/// Random displacement field warp of a single raster (see
/// [`geometry::elastic_map`]); the returned map is the one to reuse for a
/// paired mask.
pub fn elastic_warp(
    image: &crate::raster::Image,
    alpha: f64,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<(crate::raster::Image, GeometricMap)> {
    let (w, h) = image.dims();
    let map = geometry::elastic_map(w, h, alpha, sigma, rng)?;
    Ok((map.warp_image(image)?, map))
}

/// One affine warp with explicit parameters applied to image and mask.
pub fn shift_scale_rotate(
    sample: &Sample,
    shift: (f64, f64),
    scale: f64,
    angle_deg: f64,
) -> Result<Sample> {
    let (w, h) = sample.dims();
    let map = geometry::affine_map(w, h, shift.0, shift.1, scale, angle_deg)?;
    Ok(sample.with_rasters(map.warp_image(&sample.image)?, map.warp_mask(&sample.mask)?))
}

pub use pixel::coarse_dropout;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Image, Mask};
    use crate::rng::derive_stream;

    fn sample(w: usize, h: usize) -> Sample {
        let px = (0..w * h).map(|i| ((i * 37) % 251) as u8).collect();
        let labels = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if x > w / 3 && x < 2 * w / 3 && y > h / 4 && y < h / 2 {
                    2
                } else if x < w / 2 {
                    1
                } else {
                    0
                }
            })
            .collect();
        Sample::new(Image::new(w, h, px).unwrap(), Mask::new(w, h, labels).unwrap(), "t", "s").unwrap()
    }

    #[test]
    fn catalog_has_twenty_kinds_split_8_12() {
        assert_eq!(TransformKind::ALL.len(), 20);
        let spatial = TransformKind::ALL
            .iter()
            .filter(|k| k.category() == Category::Spatial)
            .count();
        assert_eq!(spatial, 8);
        for k in TransformKind::ALL {
            assert_eq!(k.name().parse::<TransformKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
            TransformSpec::default_for(k).params().validate().unwrap();
        }
    }

    #[test]
    fn params_reject_unknown_and_invalid() {
        let k = TransformKind::Rotate;
        assert!(TransformSpec::from_json(k, serde_json::json!({"angel": [0, 1]})).is_err());
        assert!(TransformSpec::from_json(k, serde_json::json!({"angle": [10, -10]})).is_err());
        let s = TransformSpec::from_json(k, serde_json::json!({})).unwrap();
        assert_eq!(s, TransformSpec::default_for(k));
        assert!(TransformSpec::from_json(TransformKind::GaussianBlur, serde_json::json!({"kernel_sizes": [4]})).is_err());
    }

    #[test]
    fn params_json_roundtrip() {
        for k in TransformKind::ALL {
            let p = TransformParams::default_for(k);
            assert_eq!(TransformParams::from_json(k, p.to_json()).unwrap(), p);
        }
    }

    #[test]
    fn flip_twice_same_axis_is_identity() {
        let s = sample(12, 9);
        for axis in ["horizontal", "vertical", "both"] {
            let spec = TransformSpec::from_json(TransformKind::Flip, serde_json::json!({"axes": [axis]})).unwrap();
            let once = apply_transform(&s, &spec, &mut derive_stream(1, "a", 0, 0)).unwrap();
            let twice = apply_transform(&once, &spec, &mut derive_stream(1, "a", 0, 1)).unwrap();
            assert_eq!(twice, s);
        }
    }

    #[test]
    fn forced_rotate_90() {
        let s = Sample::new(
            Image::new(2, 2, vec![1, 2, 3, 4]).unwrap(),
            Mask::new(2, 2, vec![1, 2, 3, 4]).unwrap(),
            "t",
            "s",
        )
        .unwrap();
        let spec = TransformSpec::from_json(TransformKind::Rotate, serde_json::json!({"angle": [90, 90]})).unwrap();
        let out = apply_transform(&s, &spec, &mut derive_stream(0, "a", 0, 0)).unwrap();
        assert_eq!(out.image.pixels(), &[3, 1, 4, 2]);
        assert_eq!(out.mask.labels(), &[3, 1, 4, 2]);
    }

    #[test]
    fn brightness_contrast_keeps_mask() {
        let s = sample(20, 20);
        let spec = TransformSpec::default_for(TransformKind::RandomBrightnessContrast);
        let out = apply_transform(&s, &spec, &mut derive_stream(3, "a", 0, 0)).unwrap();
        assert_eq!(out.mask, s.mask);
    }

    #[test]
    fn random_crop_requires_size() {
        let s = sample(64, 64);
        let spec = TransformSpec::default_for(TransformKind::RandomCrop);
        assert!(matches!(
            apply_transform(&s, &spec, &mut derive_stream(3, "a", 0, 0)),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn shift_scale_rotate_identity_and_shift() {
        let s = sample(16, 10);
        assert_eq!(shift_scale_rotate(&s, (0.0, 0.0), 1.0, 0.0).unwrap(), s);
        let row = Sample::new(
            Image::new(4, 1, vec![10, 20, 30, 40]).unwrap(),
            Mask::new(4, 1, vec![1, 1, 2, 2]).unwrap(),
            "t",
            "s",
        )
        .unwrap();
        let out = shift_scale_rotate(&row, (0.25, 0.0), 1.0, 0.0).unwrap();
        assert_eq!(out.image.pixels(), &[0, 10, 20, 30]);
        assert_eq!(out.mask.labels(), &[0, 1, 1, 2]);
    }

    #[test]
    fn elastic_zero_alpha_and_zero_raster() {
        let s = sample(24, 24);
        let (out, map) = elastic_warp(&s.image, 0.0, 4.0, &mut derive_stream(1, "e", 0, 0)).unwrap();
        assert_eq!(out, s.image);
        assert!(map.is_identity());
        let zero = Image::filled(24, 24, 0).unwrap();
        let (out, _) = elastic_warp(&zero, 34.0, 4.0, &mut derive_stream(1, "e", 0, 0)).unwrap();
        assert_eq!(out, zero);
    }

    #[test]
    fn traced_map_reproduces_mask() {
        let s = sample(40, 30);
        for k in TransformKind::ALL.into_iter().filter(|k| k.category() == Category::Spatial) {
            let spec = if k == TransformKind::RandomCrop {
                TransformSpec::from_json(k, serde_json::json!({"width": 30, "height": 20})).unwrap()
            } else {
                TransformSpec::default_for(k)
            };
            let a = apply_transform_traced(&s, &spec, &mut derive_stream(9, "a", 0, 0)).unwrap();
            let map = a.map.expect("spatial kinds report their map");
            assert_eq!(map.warp_mask(&s.mask).unwrap(), a.sample.mask, "{k}");
            assert!(a.sample.mask.label_set().is_subset(&s.mask.label_set()), "{k}");
        }
    }
}

//! Lesion transplant into generated healthy-lung images.
//!
//! A real lesion sample's lung region is moved so that its lung bounding-box
//! centre lands on the healthy image's lung bounding-box centre, clipped to
//! the healthy lung mask, blended with the healthy pixels, and the seam is
//! smoothed in a narrow band. The lesion mask follows the same translation
//! and clipping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Image, LabelSpace, Mask, Raster, Sample};
use crate::rng::RngStream;
use crate::transforms::filters::gaussian_blur;

pub const DEFAULT_SIZE_TOLERANCE: f64 = 0.10;
pub const DEFAULT_BLEND_WEIGHT: f64 = 0.5;
pub const DEFAULT_SMOOTH_KERNEL: usize = 5;
pub const DEFAULT_RETRY_BUDGET: usize = 32;
/// Half-width of the smoothed seam around the transplanted region.
pub const SEAM_BAND: usize = 2;
pub const COMPOSITE_DATASET: &str = "composite";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthySource {
    Starganv2,
    Stylegan2ada,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HealthySample {
    pub id: String,
    pub image: Image,
    pub lung_mask: Mask,
    pub source: HealthySource,
}

impl HealthySample {
    pub fn new(id: impl Into<String>, image: Image, lung_mask: Mask, source: HealthySource) -> Result<Self> {
        if image.dims() != lung_mask.dims() {
            return Err(Error::DimensionMismatch {
                left: image.dims(),
                right: lung_mask.dims(),
            });
        }
        if lung_area(&lung_mask) == 0 {
            return Err(Error::InvalidArgument("healthy lung mask is empty".into()));
        }
        Ok(Self {
            id: id.into(),
            image,
            lung_mask,
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LesionSample {
    pub id: String,
    pub image: Image,
    pub lesion_mask: Mask,
    pub lung_mask: Mask,
}

impl LesionSample {
    pub fn new(id: impl Into<String>, image: Image, lesion_mask: Mask, lung_mask: Mask) -> Result<Self> {
        for m in [&lesion_mask, &lung_mask] {
            if m.dims() != image.dims() {
                return Err(Error::DimensionMismatch {
                    left: image.dims(),
                    right: m.dims(),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            image,
            lesion_mask,
            lung_mask,
        })
    }

    pub fn hflip(&self) -> Self {
        Self {
            id: self.id.clone(),
            image: hflip(&self.image),
            lesion_mask: hflip(&self.lesion_mask),
            lung_mask: hflip(&self.lung_mask),
        }
    }
}

pub fn hflip<R: Raster>(r: &R) -> R {
    let (w, h) = r.dims();
    let mut out = r.data().to_vec();
    for row in out.chunks_mut(w) {
        row.reverse();
    }
    R::from_raw(w, h, out).expect("same dims")
}

/// Number of nonzero (lung) pixels.
pub fn lung_area(mask: &Mask) -> usize {
    mask.count_nonzero()
}

fn area_ratio_ok(lesion_area: usize, healthy_area: usize, tolerance: f64) -> bool {
    let ratio = lesion_area as f64 / healthy_area as f64;
    (ratio - 1.0).abs() <= tolerance + 1e-12
}

/// Pool indices whose lung area is within `tolerance` of the healthy area
/// (inclusive bounds), in pool order.
pub fn match_candidate_indices(healthy_area: usize, pool_areas: &[usize], tolerance: f64) -> Result<Vec<usize>> {
    if healthy_area == 0 {
        return Err(Error::InvalidArgument("healthy lung area is 0".into()));
    }
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {tolerance}")));
    }
    Ok(pool_areas
        .iter()
        .enumerate()
        .filter(|(_, &a)| area_ratio_ok(a, healthy_area, tolerance))
        .map(|(i, _)| i)
        .collect())
}

pub fn match_candidates<'a>(
    healthy: &HealthySample,
    pool: &'a [LesionSample],
    tolerance: f64,
) -> Result<Vec<&'a LesionSample>> {
    let areas: Vec<usize> = pool.iter().map(|l| lung_area(&l.lung_mask)).collect();
    Ok(match_candidate_indices(lung_area(&healthy.lung_mask), &areas, tolerance)?
        .into_iter()
        .map(|i| &pool[i])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeParams {
    pub flip_lesion: bool,
    pub blend_weight: f64,
    pub smooth_kernel: usize,
    pub size_tolerance: f64,
}

impl Default for CompositeParams {
    fn default() -> Self {
        Self {
            flip_lesion: false,
            blend_weight: DEFAULT_BLEND_WEIGHT,
            smooth_kernel: DEFAULT_SMOOTH_KERNEL,
            size_tolerance: DEFAULT_SIZE_TOLERANCE,
        }
    }
}

impl CompositeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blend_weight > 0.0 && self.blend_weight < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "blend_weight must be in (0, 1), got {}",
                self.blend_weight
            )));
        }
        if self.smooth_kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "smooth_kernel must be odd, got {}",
                self.smooth_kernel
            )));
        }
        if !(self.size_tolerance.is_finite() && self.size_tolerance >= 0.0) {
            return Err(Error::InvalidArgument("size_tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompositeRecipe<'a> {
    pub healthy: &'a HealthySample,
    pub lesion: &'a LesionSample,
    pub params: CompositeParams,
}

/// Provenance sidecar line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeProvenance {
    pub healthy_id: String,
    pub lesion_id: String,
    pub flip: bool,
    pub offset: (i64, i64),
    pub blend_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSample {
    pub sample: Sample,
    pub provenance: CompositeProvenance,
}

fn bbox_center2(mask: &Mask) -> Option<(i64, i64)> {
    let (w, _) = mask.dims();
    let mut b: Option<(usize, usize, usize, usize)> = None;
    for (i, &v) in mask.labels().iter().enumerate() {
        if v != 0 {
            let (x, y) = (i % w, i / w);
            b = Some(match b {
                None => (x, x, y, y),
                Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
            });
        }
    }
    b.map(|(x0, x1, y0, y1)| ((x0 + x1) as i64, (y0 + y1) as i64))
}

/// Translation that maps the lesion sample's lung bbox centre onto the
/// healthy one, rounded toward negative infinity on half pixels.
pub fn alignment_offset(healthy_lung: &Mask, lesion_lung: &Mask) -> Result<(i64, i64)> {
    let h = bbox_center2(healthy_lung)
        .ok_or_else(|| Error::InvalidArgument("healthy lung mask is empty".into()))?;
    let l = bbox_center2(lesion_lung)
        .ok_or_else(|| Error::InvalidArgument("lesion lung mask is empty".into()))?;
    Ok(((h.0 - l.0).div_euclid(2), (h.1 - l.1).div_euclid(2)))
}

/// Geometry of a composite before any pixel blending.
#[derive(Debug, Clone)]
pub struct CompositeLayout {
    pub offset: (i64, i64),
    /// Transplanted region: shifted lesion-sample lung ∩ healthy lung.
    pub region: Vec<bool>,
    /// Output lesion mask (binary).
    pub lesion: Vec<u8>,
}

fn oriented<'a>(lesion: &'a LesionSample, flip: bool) -> std::borrow::Cow<'a, LesionSample> {
    if flip {
        std::borrow::Cow::Owned(lesion.hflip())
    } else {
        std::borrow::Cow::Borrowed(lesion)
    }
}

fn check_recipe(recipe: &CompositeRecipe<'_>) -> Result<()> {
    recipe.params.validate()?;
    let (healthy, lesion) = (recipe.healthy, recipe.lesion);
    if healthy.image.dims() != lesion.image.dims() {
        return Err(Error::DimensionMismatch {
            left: healthy.image.dims(),
            right: lesion.image.dims(),
        });
    }
    let ha = lung_area(&healthy.lung_mask);
    let la = lung_area(&lesion.lung_mask);
    if ha == 0 {
        return Err(Error::InvalidArgument("healthy lung area is 0".into()));
    }
    if !area_ratio_ok(la, ha, recipe.params.size_tolerance) {
        return Err(Error::SizeConstraint {
            ratio: la as f64 / ha as f64,
            tolerance: recipe.params.size_tolerance,
        });
    }
    Ok(())
}

fn layout_oriented(healthy: &HealthySample, lesion: &LesionSample) -> Result<CompositeLayout> {
    let (w, h) = healthy.image.dims();
    let offset = alignment_offset(&healthy.lung_mask, &lesion.lung_mask)?;
    let mut region = vec![false; w * h];
    let mut out_mask = vec![0u8; w * h];
    for y in 0..h {
        let sy = y as i64 - offset.1;
        if sy < 0 || sy >= h as i64 {
            continue;
        }
        for x in 0..w {
            let sx = x as i64 - offset.0;
            if sx < 0 || sx >= w as i64 {
                continue;
            }
            let (sx, sy) = (sx as usize, sy as usize);
            if lesion.lung_mask.get(sx, sy) != 0 && healthy.lung_mask.get(x, y) != 0 {
                region[y * w + x] = true;
                if lesion.lesion_mask.get(sx, sy) != 0 {
                    out_mask[y * w + x] = 1;
                }
            }
        }
    }
    if !out_mask.contains(&1) {
        return Err(Error::DegenerateComposite);
    }
    Ok(CompositeLayout {
        offset,
        region,
        lesion: out_mask,
    })
}

/// Validates a recipe and computes where lesion pixels will land, without
/// touching intensities. Cheap enough to use while drawing recipes.
pub fn plan_layout(recipe: &CompositeRecipe<'_>) -> Result<CompositeLayout> {
    check_recipe(recipe)?;
    let lesion = oriented(recipe.lesion, recipe.params.flip_lesion);
    layout_oriented(recipe.healthy, &lesion)
}

/// Pixels whose 4-neighbourhood membership in `region` is mixed, dilated by
/// `SEAM_BAND` (Chebyshev).
fn seam_band(region: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut edge = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = region[y * w + x];
            let differs = (x > 0 && region[y * w + x - 1] != v)
                || (x + 1 < w && region[y * w + x + 1] != v)
                || (y > 0 && region[(y - 1) * w + x] != v)
                || (y + 1 < h && region[(y + 1) * w + x] != v);
            edge[y * w + x] = differs;
        }
    }
    let r = SEAM_BAND as i64;
    let mut band = vec![false; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !edge[(y * w as i64 + x) as usize] {
                continue;
            }
            for yy in (y - r).max(0)..=(y + r).min(h as i64 - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as i64 - 1) {
                    band[(yy * w as i64 + xx) as usize] = true;
                }
            }
        }
    }
    band
}

pub fn compose(recipe: &CompositeRecipe<'_>) -> Result<CompositeSample> {
    check_recipe(recipe)?;
    let p = recipe.params;
    let healthy = recipe.healthy;
    let lesion = oriented(recipe.lesion, p.flip_lesion);
    let layout = layout_oriented(healthy, &lesion)?;
    let (w, h) = healthy.image.dims();
    let (ox, oy) = layout.offset;

    let mut px = healthy.image.pixels().to_vec();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if layout.region[i] {
                let sx = (x as i64 - ox) as usize;
                let sy = (y as i64 - oy) as usize;
                let l = f64::from(lesion.image.get(sx, sy));
                let g = f64::from(px[i]);
                px[i] = (p.blend_weight * l + (1.0 - p.blend_weight) * g)
                    .round()
                    .clamp(0.0, 255.0) as u8;
            }
        }
    }
    let blended = Image::new(w, h, px)?;
    let blurred = gaussian_blur(&blended, p.smooth_kernel)?;
    let band = seam_band(&layout.region, w, h);
    let out: Vec<u8> = blended
        .pixels()
        .iter()
        .zip(blurred.pixels())
        .zip(&band)
        .map(|((&b, &s), &in_band)| if in_band { s } else { b })
        .collect();

    let sample_id = format!(
        "{}__{}{}",
        healthy.id,
        lesion.id,
        if p.flip_lesion { "__flip" } else { "" }
    );
    let mut sample = Sample::new(
        Image::new(w, h, out)?,
        Mask::new(w, h, layout.lesion)?,
        COMPOSITE_DATASET,
        sample_id,
    )?;
    sample.label_space = LabelSpace::Binary;
    Ok(CompositeSample {
        sample,
        provenance: CompositeProvenance {
            healthy_id: healthy.id.clone(),
            lesion_id: lesion.id.clone(),
            flip: p.flip_lesion,
            offset: layout.offset,
            blend_weight: p.blend_weight,
        },
    })
}

/// Draws `(healthy, lesion)` index pairs.
///
/// For each composite: draw a healthy index uniformly; find size-matched
/// lesion candidates; if there are none, or `accept` rejects the drawn pair,
/// redraw the healthy image. `retry_budget` redraws are allowed per
/// composite before giving up.
pub fn draw_pairs(
    count: usize,
    healthy_areas: &[usize],
    lesion_areas: &[usize],
    tolerance: f64,
    retry_budget: usize,
    rng: &mut RngStream,
    mut accept: impl FnMut(usize, usize) -> bool,
) -> Result<Vec<(usize, usize)>> {
    if count > 0 && (healthy_areas.is_empty() || lesion_areas.is_empty()) {
        return Err(Error::InvalidArgument("healthy and lesion pools must be non-empty".into()));
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..=retry_budget {
            let hi = rng.index(healthy_areas.len());
            if healthy_areas[hi] == 0 {
                continue;
            }
            let cands = match_candidate_indices(healthy_areas[hi], lesion_areas, tolerance)?;
            if cands.is_empty() {
                continue;
            }
            let li = cands[rng.index(cands.len())];
            if accept(hi, li) {
                found = Some((hi, li));
                break;
            }
        }
        pairs.push(found.ok_or(Error::RetryBudgetExhausted {
            retries: retry_budget,
        })?);
    }
    Ok(pairs)
}

/// `floor(fraction * n)`, tolerant of binary rounding in `fraction`.
pub fn expansion_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64 + 1e-9).floor() as usize
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    Ok(())
}

/// Offline expansion: the originals, followed by `floor(fraction * |train|)`
/// composites. Recipes are drawn sequentially from `rng`, then composed in
/// parallel.
pub fn expand_offline(
    train: &[Sample],
    healthy_pool: &[HealthySample],
    lesion_pool: &[LesionSample],
    fraction: f64,
    params: CompositeParams,
    rng: &mut RngStream,
) -> Result<(Vec<Sample>, Vec<CompositeProvenance>)> {
    check_fraction(fraction)?;
    params.validate()?;
    let count = expansion_count(train.len(), fraction);
    if count == 0 {
        return Ok((train.to_vec(), Vec::new()));
    }
    let ha: Vec<usize> = healthy_pool.iter().map(|h| lung_area(&h.lung_mask)).collect();
    let la: Vec<usize> = lesion_pool.iter().map(|l| lung_area(&l.lung_mask)).collect();
    let pairs = draw_pairs(count, &ha, &la, params.size_tolerance, DEFAULT_RETRY_BUDGET, rng, |h, l| {
        plan_layout(&CompositeRecipe {
            healthy: &healthy_pool[h],
            lesion: &lesion_pool[l],
            params,
        })
        .is_ok()
    })?;
    let composites = pairs
        .par_iter()
        .map(|&(h, l)| {
            compose(&CompositeRecipe {
                healthy: &healthy_pool[h],
                lesion: &lesion_pool[l],
                params,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = train.to_vec();
    let mut prov = Vec::with_capacity(composites.len());
    for c in composites {
        out.push(c.sample);
        prov.push(c.provenance);
    }
    Ok((out, prov))
}

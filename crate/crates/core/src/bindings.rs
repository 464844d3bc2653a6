//! Array-level entry points for embedding the online scheduler in a
//! host-language training loop. Host wrappers call only these two items.

use std::borrow::Cow;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::raster::{Image, Mask, Sample};
use crate::scheduler::{augment_batch, batch_gate, AugmentationPlan, Batch, GateMode};
use crate::transforms::{TransformKind, TransformSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BindingConfig {
    master_seed: u64,
    kind: TransformKind,
    probability: f64,
    #[serde(default)]
    params: serde_json::Value,
    #[serde(default)]
    gate: GateMode,
}

/// A validated, immutable plan plus the seed it runs under.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundPlan {
    plan: AugmentationPlan,
    master_seed: u64,
}

impl BoundPlan {
    pub fn new(plan: AugmentationPlan, master_seed: u64) -> Self {
        Self { plan, master_seed }
    }

    /// JSON object with `master_seed`, `kind`, `probability` and optional
    /// `params` and `gate`.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let c: BindingConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let plan = AugmentationPlan::new(TransformSpec::from_json(c.kind, c.params)?, c.probability)?
            .with_gate(c.gate);
        Ok(Self::new(plan, c.master_seed))
    }

    pub fn from_config_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_config_str(&text)
    }

    pub fn plan(&self) -> &AugmentationPlan {
        &self.plan
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }
}

/// A borrowed C-contiguous `n x h x w` host array.
#[derive(Debug, Clone, Copy)]
pub struct ArrayView<'a> {
    pub data: &'a [u8],
    pub shape: [usize; 3],
    /// Bytes per element as reported by the host; only 1 is accepted.
    pub itemsize: usize,
}

impl<'a> ArrayView<'a> {
    pub fn u8(data: &'a [u8], shape: [usize; 3]) -> Self {
        Self { data, shape, itemsize: 1 }
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.itemsize != 1 {
            return Err(Error::InvalidArgument(format!(
                "{what} must be 8-bit, got {}-byte elements",
                self.itemsize
            )));
        }
        let [n, h, w] = self.shape;
        if n == 0 || h == 0 || w == 0 || self.data.len() != n * h * w {
            return Err(Error::InvalidArgument(format!(
                "{what} buffer of {} bytes does not match shape {:?}",
                self.data.len(),
                self.shape
            )));
        }
        Ok(())
    }
}

/// Augmented `(images, masks)` buffers; borrowed when nothing changed.
pub type ArrayPair<'a> = (Cow<'a, [u8]>, Cow<'a, [u8]>);

/// Augments one batch given as flat arrays. When no image in the batch is
/// gated, the inputs are handed back without copying.
pub fn augment_batch_arrays<'a>(
    bound: &BoundPlan,
    images: ArrayView<'a>,
    masks: ArrayView<'a>,
    epoch: u64,
    batch_index: u64,
) -> Result<ArrayPair<'a>> {
    images.check("images")?;
    masks.check("masks")?;
    if images.shape != masks.shape {
        return Err(Error::InvalidArgument(format!(
            "image shape {:?} differs from mask shape {:?}",
            images.shape, masks.shape
        )));
    }
    let plan = &bound.plan;
    if plan.gate() == GateMode::PerBatch && !batch_gate(plan.probability(), bound.master_seed, epoch, batch_index) {
        return Ok((Cow::Borrowed(images.data), Cow::Borrowed(masks.data)));
    }
    let [n, h, w] = images.shape;
    let plane = h * w;
    let samples = (0..n)
        .map(|i| {
            let r = i * plane..(i + 1) * plane;
            Sample::new(
                Image::new(w, h, images.data[r.clone()].to_vec())?,
                Mask::new(w, h, masks.data[r].to_vec())?,
                "bound",
                i.to_string(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let out = augment_batch(&Batch::new(samples, epoch, batch_index)?, plan, bound.master_seed)?;
    let mut img_out = Vec::with_capacity(n * plane);
    let mut mask_out = Vec::with_capacity(n * plane);
    for s in out.samples() {
        img_out.extend_from_slice(s.image.pixels());
        mask_out.extend_from_slice(s.mask.labels());
    }
    Ok((Cow::Owned(img_out), Cow::Owned(mask_out)))
}

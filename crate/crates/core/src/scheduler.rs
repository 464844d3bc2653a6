//! Online augmentation: one configured technique applied to a whole batch
//! with probability `p`.
//!
//! Stream keys:
//! - batch gate: `derive_stream(seed, "gate", epoch, batch_index)`
//! - per-image gate (ablation mode): `derive_stream(seed, "gate-item", epoch, item_key)`
//! - per-image transform: `derive_stream(seed, "aug", epoch, item_key)`
//!
//! with `item_key = batch_index << 32 | position_in_batch`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Sample;
use crate::rng::derive_stream;
use crate::transforms::{apply_transform, TransformKind, TransformSpec};

/// Application probabilities evaluated per technique.
pub const PRESET_PROBABILITIES: [f64; 6] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// One Bernoulli draw per batch; all-or-nothing.
    #[default]
    PerBatch,
    /// One draw per image.
    PerImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    spec: TransformSpec,
    probability: f64,
    gate: GateMode,
}

impl AugmentationPlan {
    pub fn new(spec: TransformSpec, probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::InvalidSpec(format!(
                "probability must be in [0, 1], got {probability}"
            )));
        }
        Ok(Self {
            spec,
            probability,
            gate: GateMode::PerBatch,
        })
    }

    pub fn with_gate(mut self, gate: GateMode) -> Self {
        self.gate = gate;
        self
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn gate(&self) -> GateMode {
        self.gate
    }

    pub fn kind(&self) -> TransformKind {
        self.spec.kind()
    }

    pub fn to_record(&self) -> TransformConfigRecord {
        TransformConfigRecord {
            kind: self.kind(),
            probability: self.probability,
            params: self.spec.params().to_json(),
        }
    }
}

/// One line of a transform configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfigRecord {
    pub kind: TransformKind,
    pub probability: f64,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl TryFrom<TransformConfigRecord> for AugmentationPlan {
    type Error = Error;

    fn try_from(r: TransformConfigRecord) -> Result<Self> {
        AugmentationPlan::new(TransformSpec::from_json(r.kind, r.params)?, r.probability)
    }
}

/// Parses a JSON array of records, a single record, or one record per line.
pub fn parse_transform_config(text: &str) -> Result<Vec<AugmentationPlan>> {
    let trimmed = text.trim_start();
    let records: Vec<TransformConfigRecord> = if trimmed.starts_with('[') {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
    } else {
        let mut v = Vec::new();
        let de = serde_json::Deserializer::from_str(text).into_iter::<TransformConfigRecord>();
        for rec in de {
            v.push(rec.map_err(|e| Error::Config(e.to_string()))?);
        }
        v
    };
    if records.is_empty() {
        return Err(Error::Config("transform config contains no records".into()));
    }
    records.into_iter().map(AugmentationPlan::try_from).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    samples: Vec<Sample>,
    pub epoch: u64,
    pub batch_index: u64,
}

impl Batch {
    pub fn new(samples: Vec<Sample>, epoch: u64, batch_index: u64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("batch must not be empty".into()))?
            .dims();
        if let Some(s) = samples.iter().find(|s| s.dims() != first) {
            return Err(Error::DimensionMismatch {
                left: first,
                right: s.dims(),
            });
        }
        Ok(Self {
            samples,
            epoch,
            batch_index,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn item_key(batch_index: u64, position: usize) -> u64 {
    (batch_index << 32) | position as u64
}

/// Whether the per-batch gate fires for this batch.
pub fn batch_gate(probability: f64, master_seed: u64, epoch: u64, batch_index: u64) -> bool {
    derive_stream(master_seed, "gate", epoch, batch_index).bernoulli(probability)
}

pub fn augment_batch(batch: &Batch, plan: &AugmentationPlan, master_seed: u64) -> Result<Batch> {
    let (epoch, bi) = (batch.epoch, batch.batch_index);
    let gated: Vec<bool> = match plan.gate {
        GateMode::PerBatch => vec![batch_gate(plan.probability, master_seed, epoch, bi); batch.len()],
        GateMode::PerImage => (0..batch.len())
            .map(|i| derive_stream(master_seed, "gate-item", epoch, item_key(bi, i)).bernoulli(plan.probability))
            .collect(),
    };
    if !gated.iter().any(|&g| g) {
        return Ok(batch.clone());
    }
    let samples = batch
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if gated[i] {
                let mut rng = derive_stream(master_seed, "aug", epoch, item_key(bi, i));
                apply_transform(s, &plan.spec, &mut rng)
            } else {
                Ok(s.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        samples,
        epoch,
        batch_index: bi,
    })
}

/// Streaming wrapper around [`augment_batch`].
#[derive(Debug, Clone)]
pub struct OnlineAugmenter {
    pub plan: AugmentationPlan,
    pub master_seed: u64,
    pub batch_size: usize,
    pub epoch: u64,
    /// Batches gathered before fanning out to the thread pool.
    pub lookahead: usize,
}

impl OnlineAugmenter {
    pub fn new(plan: AugmentationPlan, batch_size: usize, master_seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        Ok(Self {
            plan,
            master_seed,
            batch_size,
            epoch: 0,
            lookahead: 8,
        })
    }

    pub fn epoch(mut self, epoch: u64) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn stream<I>(&self, samples: I) -> AugmentStream<I::IntoIter>
    where
        I: IntoIterator<Item = Sample>,
    {
        AugmentStream {
            cfg: self.clone(),
            source: samples.into_iter(),
            next_batch: 0,
            ready: VecDeque::new(),
            failed: false,
        }
    }
}

pub fn augment_stream<I>(
    samples: I,
    plan: &AugmentationPlan,
    batch_size: usize,
    master_seed: u64,
) -> Result<AugmentStream<I::IntoIter>>
where
    I: IntoIterator<Item = Sample>,
{
    Ok(OnlineAugmenter::new(plan.clone(), batch_size, master_seed)?.stream(samples))
}

pub struct AugmentStream<I> {
    cfg: OnlineAugmenter,
    source: I,
    next_batch: u64,
    ready: VecDeque<Sample>,
    failed: bool,
}

impl<I: Iterator<Item = Sample>> AugmentStream<I> {
    fn refill(&mut self) -> Result<()> {
        let mut batches = Vec::new();
        for _ in 0..self.cfg.lookahead.max(1) {
            let chunk: Vec<Sample> = self.source.by_ref().take(self.cfg.batch_size).collect();
            if chunk.is_empty() {
                break;
            }
            batches.push(Batch::new(chunk, self.cfg.epoch, self.next_batch)?);
            self.next_batch += 1;
        }
        let done = batches
            .par_iter()
            .map(|b| augment_batch(b, &self.cfg.plan, self.cfg.master_seed))
            .collect::<Result<Vec<_>>>()?;
        for b in done {
            self.ready.extend(b.into_samples());
        }
        Ok(())
    }
}

impl<I: Iterator<Item = Sample>> Iterator for AugmentStream<I> {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.ready.is_empty() {
            if let Err(e) = self.refill() {
                self.failed = true;
                return Some(Err(e));
            }
        }
        self.ready.pop_front().map(Ok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Image, Mask};

    fn samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let px = (0..64).map(|j| ((i * 31 + j * 7) % 256) as u8).collect();
                let labels = (0..64).map(|j| u8::from(j % 8 < 3)).collect();
                Sample::new(
                    Image::new(8, 8, px).unwrap(),
                    Mask::new(8, 8, labels).unwrap(),
                    "d",
                    format!("s{i}"),
                )
                .unwrap()
            })
            .collect()
    }

    fn plan(kind: TransformKind, p: f64) -> AugmentationPlan {
        AugmentationPlan::new(TransformSpec::default_for(kind), p).unwrap()
    }

    #[test]
    fn probability_is_validated() {
        let spec = TransformSpec::default_for(TransformKind::Flip);
        assert!(AugmentationPlan::new(spec.clone(), 1.5).is_err());
        assert!(AugmentationPlan::new(spec, -0.1).is_err());
    }

    #[test]
    fn p0_is_identity_p1_applies() {
        let b = Batch::new(samples(4), 0, 3).unwrap();
        for seed in 0..20 {
            assert_eq!(augment_batch(&b, &plan(TransformKind::Flip, 0.0), seed).unwrap(), b);
            let out = augment_batch(&b, &plan(TransformKind::Flip, 1.0), seed).unwrap();
            for (o, i) in out.samples().iter().zip(b.samples()) {
                assert_ne!(o.image, i.image);
            }
        }
    }

    #[test]
    fn gate_is_all_or_nothing() {
        let b = Batch::new(samples(6), 1, 0).unwrap();
        let p = plan(TransformKind::Posterize, 0.5);
        for bi in 0..40 {
            let b = Batch { batch_index: bi, ..b.clone() };
            let out = augment_batch(&b, &p, 11).unwrap();
            let changed: Vec<bool> = out.samples().iter().zip(b.samples()).map(|(o, i)| o != i).collect();
            assert!(changed.iter().all(|&c| c) || changed.iter().all(|&c| !c));
            assert_eq!(changed[0], batch_gate(0.5, 11, 1, bi));
        }
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(Batch::new(vec![], 0, 0).is_err());
    }

    #[test]
    fn stream_matches_per_sample_application() {
        let p = plan(TransformKind::ShiftScaleRotate, 1.0);
        let input = samples(7);
        let out: Vec<Sample> = augment_stream(input.clone(), &p, 1, 5)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        for (i, (o, s)) in out.iter().zip(&input).enumerate() {
            let mut rng = derive_stream(5, "aug", 0, item_key(i as u64, 0));
            assert_eq!(o, &apply_transform(s, p.spec(), &mut rng).unwrap());
        }
        assert_eq!(augment_stream(Vec::new(), &p, 3, 5).unwrap().count(), 0);
        assert!(augment_stream(Vec::new(), &p, 0, 5).is_err());
    }

    #[test]
    fn config_parsing_forms() {
        let arr = r#"[{"kind":"Rotate","probability":0.1,"params":{"angle":[-10,10]}},{"kind":"CLAHE","probability":0.3}]"#;
        let plans = parse_transform_config(arr).unwrap();
        assert_eq!(plans.len(), 2);
        assert_eq!(plans[1].kind(), TransformKind::Clahe);
        let lines = "{\"kind\":\"Flip\",\"probability\":0.05}\n{\"kind\":\"Emboss\",\"probability\":0.2,\"params\":{}}\n";
        assert_eq!(parse_transform_config(lines).unwrap().len(), 2);
        assert!(parse_transform_config(r#"{"kind":"Flip","probability":1.5}"#).is_err());
        assert!(parse_transform_config(r#"{"kind":"Flip","probability":0.5,"p":1}"#).is_err());
        assert!(parse_transform_config(r#"{"kind":"Nope","probability":0.5}"#).is_err());
        let rec = plans[0].to_record();
        assert_eq!(AugmentationPlan::try_from(rec).unwrap(), plans[0]);
    }
}

//! Filtering, binary remapping, train/test splitting, fold planning and
//! replication-based balancing of the unified training set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::ManifestRecord;
use crate::raster::{LabelSpace, Mask, Raster, Sample};
use crate::rng::RngStream;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelMapRepr {
    dataset_id: String,
    raw_to_class: BTreeMap<u8, u8>,
    lesion_classes: BTreeSet<u8>,
    #[serde(default)]
    lung_only_classes: BTreeSet<u8>,
}

/// Per-dataset translation from raw mask values to canonical class ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelMapRepr")]
pub struct LabelMap {
    pub dataset_id: String,
    pub raw_to_class: BTreeMap<u8, u8>,
    pub lesion_classes: BTreeSet<u8>,
    pub lung_only_classes: BTreeSet<u8>,
}

impl TryFrom<LabelMapRepr> for LabelMap {
    type Error = Error;

    fn try_from(r: LabelMapRepr) -> Result<Self> {
        LabelMap::new(r.dataset_id, r.raw_to_class, r.lesion_classes, r.lung_only_classes)
    }
}

impl LabelMap {
    pub fn new(
        dataset_id: impl Into<String>,
        raw_to_class: BTreeMap<u8, u8>,
        lesion_classes: BTreeSet<u8>,
        lung_only_classes: BTreeSet<u8>,
    ) -> Result<Self> {
        let dataset_id = dataset_id.into();
        let bad = |m: String| Err(Error::Config(format!("label map {dataset_id}: {m}")));
        if raw_to_class.get(&0) != Some(&0) {
            return bad("raw value 0 must map to background class 0".into());
        }
        if lesion_classes.contains(&0) || lung_only_classes.contains(&0) {
            return bad("class 0 is background and cannot be a lesion or lung class".into());
        }
        if let Some(c) = lesion_classes.intersection(&lung_only_classes).next() {
            return bad(format!("class {c} is both lesion and lung-only"));
        }
        let classes: BTreeSet<u8> = raw_to_class.values().copied().collect();
        if let Some(c) = lesion_classes
            .iter()
            .chain(&lung_only_classes)
            .find(|c| !classes.contains(c))
        {
            return bad(format!("class {c} is not produced by raw_to_class"));
        }
        Ok(Self {
            dataset_id,
            raw_to_class,
            lesion_classes,
            lung_only_classes,
        })
    }

    /// `{0 -> background, 1 -> lesion}`; used for composites and predictions.
    pub fn binary(dataset_id: impl Into<String>) -> Self {
        Self::new(
            dataset_id,
            BTreeMap::from([(0, 0), (1, 1)]),
            BTreeSet::from([1]),
            BTreeSet::new(),
        )
        .expect("binary label map is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn classes(&self) -> BTreeSet<u8> {
        self.raw_to_class.values().copied().collect()
    }

    pub fn is_lesion(&self, class: u8) -> bool {
        self.lesion_classes.contains(&class)
    }

    /// Lesion classes plus lung-only classes.
    pub fn is_lung(&self, class: u8) -> bool {
        self.lesion_classes.contains(&class) || self.lung_only_classes.contains(&class)
    }

    /// Raw dataset values to canonical ids.
    pub fn translate(&self, raw: &Mask) -> Result<Mask> {
        let mut lut = [None; 256];
        for (&r, &c) in &self.raw_to_class {
            lut[r as usize] = Some(c);
        }
        let labels = raw
            .labels()
            .iter()
            .map(|&v| {
                lut[v as usize].ok_or_else(|| Error::UnknownLabel {
                    dataset: self.dataset_id.clone(),
                    value: v,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mask::new(raw.width(), raw.height(), labels)
    }

    /// Canonical ids back to raw values (smallest raw value per class).
    pub fn encode_raw(&self, canonical: &Mask) -> Result<Mask> {
        let mut lut = [None; 256];
        for (&r, &c) in self.raw_to_class.iter().rev() {
            lut[c as usize] = Some(r);
        }
        let labels = canonical
            .labels()
            .iter()
            .map(|&v| {
                lut[v as usize].ok_or_else(|| Error::UnknownLabel {
                    dataset: self.dataset_id.clone(),
                    value: v,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mask::new(canonical.width(), canonical.height(), labels)
    }

    /// Binary lung mask (1 where the class is lung or lesion).
    pub fn lung_mask(&self, canonical: &Mask) -> Mask {
        let labels = canonical
            .labels()
            .iter()
            .map(|&c| u8::from(self.is_lung(c)))
            .collect();
        Mask::new(canonical.width(), canonical.height(), labels).expect("same dims")
    }
}

fn has_lesion(sample: &Sample, map: &LabelMap) -> bool {
    match sample.label_space {
        LabelSpace::Binary => sample.mask.labels().contains(&1),
        LabelSpace::Dataset => sample.mask.labels().iter().any(|&l| map.is_lesion(l)),
    }
}

/// Splits off samples without any lesion pixel (empty or lung-only masks).
pub fn filter_samples(samples: Vec<Sample>, label_map: &LabelMap) -> (Vec<Sample>, Vec<Sample>) {
    samples.into_iter().partition(|s| has_lesion(s, label_map))
}

/// Lesion classes become 1, everything else 0. Already-binary samples pass through.
pub fn remap_binary(sample: &Sample, label_map: &LabelMap) -> Result<Sample> {
    if sample.label_space == LabelSpace::Binary {
        return Ok(sample.clone());
    }
    let known = label_map.classes();
    let labels = sample
        .mask
        .labels()
        .iter()
        .map(|&c| {
            if !known.contains(&c) {
                return Err(Error::UnknownLabel {
                    dataset: label_map.dataset_id.clone(),
                    value: c,
                });
            }
            Ok(u8::from(label_map.is_lesion(c)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = sample.dims();
    let mut out = sample.with_rasters(sample.image.clone(), Mask::new(w, h, labels)?);
    out.label_space = LabelSpace::Binary;
    Ok(out)
}

pub const MIN_SPLIT_SAMPLES: usize = 5;

/// Number of training items for an 80/20 split, `ceil(0.8 * n)` in integers.
pub fn pareto_train_count(n: usize) -> usize {
    (4 * n).div_ceil(5)
}

/// Seeded shuffle, then the first `ceil(0.8 n)` items train and the rest test.
pub fn split_pareto<T: Clone>(items: &[T], rng: &mut RngStream) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < MIN_SPLIT_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SPLIT_SAMPLES} samples to split, got {}",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    rng.shuffle(&mut order);
    let n_train = pareto_train_count(items.len());
    let train = order[..n_train].iter().map(|&i| items[i].clone()).collect();
    let test = order[n_train..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}

/// Items that can be addressed by a stable string key in fold plans.
pub trait SampleKey {
    fn sample_key(&self) -> String;
}

impl SampleKey for Sample {
    fn sample_key(&self) -> String {
        self.sample_id.clone()
    }
}

impl SampleKey for ManifestRecord {
    fn sample_key(&self) -> String {
        self.sample_key()
    }
}

impl SampleKey for String {
    fn sample_key(&self) -> String {
        self.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    pub test_ids: BTreeSet<String>,
}

impl FoldPlan {
    pub fn fold_of(&self, key: &str) -> Option<usize> {
        self.assignments.get(key).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn with_test_ids<T: SampleKey>(mut self, test: &[T]) -> Result<Self> {
        for t in test {
            let key = t.sample_key();
            if self.assignments.contains_key(&key) {
                return Err(Error::InvalidArgument(format!(
                    "test id {key} also appears in the training folds"
                )));
            }
            self.test_ids.insert(key);
        }
        Ok(self)
    }
}

/// Shuffled round-robin fold assignment; fold sizes differ by at most one.
pub fn make_folds<T: SampleKey>(train: &[T], k: usize, rng: &mut RngStream) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if k > train.len() {
        return Err(Error::InvalidArgument(format!(
            "k={k} exceeds the {} training samples",
            train.len()
        )));
    }
    let mut keys: Vec<String> = train.iter().map(SampleKey::sample_key).collect();
    let unique: BTreeSet<&String> = keys.iter().collect();
    if unique.len() != keys.len() {
        return Err(Error::InvalidArgument("duplicate sample keys in training set".into()));
    }
    rng.shuffle(&mut keys);
    let assignments = keys
        .into_iter()
        .enumerate()
        .map(|(i, key)| (key, i % k))
        .collect();
    Ok(FoldPlan {
        k,
        assignments,
        test_ids: BTreeSet::new(),
    })
}

/// Which set sizes feed the replication factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    #[default]
    Train,
    Whole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceEntry {
    pub dataset_id: String,
    pub size: usize,
    pub factor: usize,
    pub replicated_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub largest: String,
    pub entries: Vec<BalanceEntry>,
}

impl BalanceReport {
    pub fn factor(&self, dataset_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.dataset_id == dataset_id)
            .map(|e| e.factor)
    }
}

/// `n_i = ceil(|largest| / |x_i|)` for every dataset.
pub fn balance_factors(sizes: &BTreeMap<String, usize>) -> Result<BalanceReport> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "balancing needs at least 2 datasets, got {}",
            sizes.len()
        )));
    }
    if let Some((id, _)) = sizes.iter().find(|(_, &n)| n == 0) {
        return Err(Error::InvalidArgument(format!("dataset {id} is empty")));
    }
    // first maximum in key order
    let (largest, &max) = sizes
        .iter()
        .fold(None::<(&String, &usize)>, |best, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
        .expect("non-empty");
    let entries = sizes
        .iter()
        .map(|(id, &size)| {
            let factor = max.div_ceil(size);
            BalanceEntry {
                dataset_id: id.clone(),
                size,
                factor,
                replicated_size: factor * size,
            }
        })
        .collect();
    Ok(BalanceReport {
        largest: largest.clone(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replica<T> {
    pub dataset_id: String,
    pub replicate_index: usize,
    pub item: T,
}

/// Replicates each dataset's items `n_i` times and concatenates them in
/// dataset-key order. For sample lists, remap with [`remap_binary`] first or
/// use [`balance_unified_samples`].
pub fn balance_unified<T: Clone>(
    train_sets: &BTreeMap<String, Vec<T>>,
) -> Result<(Vec<Replica<T>>, BalanceReport)> {
    let sizes = train_sets
        .iter()
        .map(|(k, v)| (k.clone(), v.len()))
        .collect();
    let report = balance_factors(&sizes)?;
    let mut unified = Vec::new();
    for entry in &report.entries {
        let items = &train_sets[&entry.dataset_id];
        for replicate_index in 0..entry.factor {
            unified.extend(items.iter().map(|item| Replica {
                dataset_id: entry.dataset_id.clone(),
                replicate_index,
                item: item.clone(),
            }));
        }
    }
    Ok((unified, report))
}

/// Binary-remaps every sample with its dataset's label map, then balances.
pub fn balance_unified_samples(
    train_sets: &BTreeMap<String, Vec<Sample>>,
    label_maps: &BTreeMap<String, LabelMap>,
) -> Result<(Vec<Replica<Sample>>, BalanceReport)> {
    let remapped = train_sets
        .iter()
        .map(|(id, samples)| {
            let map = label_maps
                .get(id)
                .ok_or_else(|| Error::Config(format!("no label map for dataset {id}")))?;
            let v = samples
                .iter()
                .map(|s| remap_binary(s, map))
                .collect::<Result<Vec<_>>>()?;
            Ok((id.clone(), v))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    balance_unified(&remapped)
}

//! Pixel-level segmentation metrics and the Fréchet distance between
//! Gaussian fits of two embedding sets.

use std::collections::BTreeMap;
use std::io::{BufRead, Read};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Per-pixel counts with lesion (1) as the positive class.
pub fn confusion(pred: &Mask, truth: &Mask) -> Result<ConfusionCounts> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            left: pred.dims(),
            right: truth.dims(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        if p > 1 {
            return Err(Error::NonBinaryMask(p));
        }
        if t > 1 {
            return Err(Error::NonBinaryMask(t));
        }
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// `tp / (tp + (fp + fn) / 2)`; 1.0 when nothing is positive on either side.
pub fn fscore(c: &ConfusionCounts) -> f64 {
    if c.tp + c.fp + c.fn_ == 0 {
        return 1.0;
    }
    let tp = c.tp as f64;
    2.0 * tp / (2.0 * tp + (c.fp + c.fn_) as f64)
}

/// `tp / (tp + fp + fn)`; 1.0 when nothing is positive on either side.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let union = c.tp + c.fp + c.fn_;
    if union == 0 {
        return 1.0;
    }
    c.tp as f64 / union as f64
}

/// Grouping labels attached to each evaluated image.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub technique: String,
    /// Application probability formatted as text, so it orders and hashes.
    pub probability: String,
    pub dataset: String,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub group: GroupKey,
    pub counts: ConfusionCounts,
    pub fscore: f64,
    pub iou: f64,
}

impl EvalRecord {
    pub fn new(sample_id: impl Into<String>, group: GroupKey, counts: ConfusionCounts) -> Self {
        Self {
            sample_id: sample_id.into(),
            group,
            fscore: fscore(&counts),
            iou: iou(&counts),
            counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupDim {
    Technique,
    Probability,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    /// Selected dimension values, in the order of the requested dims.
    pub key: Vec<String>,
    pub fold: Option<usize>,
    pub n: usize,
    /// Macro: mean of per-image values (then mean over folds at group level).
    pub mean_fscore: f64,
    pub mean_iou: f64,
    /// Micro: metrics of the pooled confusion counts.
    pub micro_fscore: f64,
    pub micro_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateTable {
    pub dims: Vec<GroupDim>,
    pub per_fold: Vec<AggregateRow>,
    pub per_group: Vec<AggregateRow>,
}

fn key_of(g: &GroupKey, dims: &[GroupDim]) -> Vec<String> {
    dims.iter()
        .map(|d| match d {
            GroupDim::Technique => g.technique.clone(),
            GroupDim::Probability => g.probability.clone(),
            GroupDim::Dataset => g.dataset.clone(),
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Mean per-image metrics within each (selected dims, fold) cell, then the
/// mean of those fold means per selected-dims group.
pub fn aggregate(records: &[EvalRecord], dims: &[GroupDim]) -> Result<AggregateTable> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to aggregate".into()));
    }
    let mut cells: BTreeMap<(Vec<String>, Option<usize>), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((key_of(&r.group, dims), r.group.fold))
            .or_default()
            .push(r);
    }
    let per_fold: Vec<AggregateRow> = cells
        .into_iter()
        .map(|((key, fold), rs)| {
            let pooled = rs.iter().fold(ConfusionCounts::default(), |a, r| a + r.counts);
            AggregateRow {
                key,
                fold,
                n: rs.len(),
                mean_fscore: mean(rs.iter().map(|r| r.fscore)),
                mean_iou: mean(rs.iter().map(|r| r.iou)),
                micro_fscore: fscore(&pooled),
                micro_iou: iou(&pooled),
            }
        })
        .collect();
    let mut groups: BTreeMap<Vec<String>, Vec<&AggregateRow>> = BTreeMap::new();
    for row in &per_fold {
        groups.entry(row.key.clone()).or_default().push(row);
    }
    let mut pooled_by_group: BTreeMap<Vec<String>, ConfusionCounts> = BTreeMap::new();
    for r in records {
        let e = pooled_by_group.entry(key_of(&r.group, dims)).or_default();
        *e = *e + r.counts;
    }
    let per_group = groups
        .into_iter()
        .map(|(key, rows)| {
            let pooled = pooled_by_group[&key];
            AggregateRow {
                n: rows.len(),
                fold: None,
                mean_fscore: mean(rows.iter().map(|r| r.mean_fscore)),
                mean_iou: mean(rows.iter().map(|r| r.mean_iou)),
                micro_fscore: fscore(&pooled),
                micro_iou: iou(&pooled),
                key,
            }
        })
        .collect();
    Ok(AggregateTable {
        dims: dims.to_vec(),
        per_fold,
        per_group,
    })
}

/// `n x d` matrix of externally computed features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    features: DMatrix<f64>,
}

impl EmbeddingSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding set needs n >= 2 and d >= 1, got {n}x{d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for {n}x{d}, got {}",
                n * d,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding entry".into()));
        }
        Ok(Self {
            features: DMatrix::from_row_slice(n, d, &data),
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    fn mean(&self) -> DVector<f64> {
        self.features.row_mean().transpose()
    }

    /// Unbiased sample covariance.
    fn covariance(&self) -> DMatrix<f64> {
        let mu = self.features.row_mean();
        let mut centered = self.features.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mu;
        }
        centered.transpose() * &centered / (self.n() as f64 - 1.0)
    }

    /// Reads a header line `n d` followed by either `n` CSV rows or, when the
    /// file extension is `.bin`, `n * d` little-endian f64 values.
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = std::io::BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(|e| Error::io(path, e))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                reason: format!("bad header {header:?}: {e}"),
            })?;
        let [n, d] = dims[..] else {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: format!("header must be `n d`, got {header:?}"),
            });
        };
        let bad = |reason: String| Error::Decode {
            path: path.to_path_buf(),
            reason,
        };
        let data = if path.extension().is_some_and(|e| e == "bin") {
            let mut bytes = Vec::new();
            reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
            if bytes.len() != n * d * 8 {
                return Err(bad(format!("expected {} bytes, got {}", n * d * 8, bytes.len())));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        } else {
            let mut v = Vec::with_capacity(n * d);
            for line in reader.lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                for t in line.split(',') {
                    v.push(t.trim().parse::<f64>().map_err(|e| bad(format!("{t:?}: {e}")))?);
                }
            }
            v
        };
        Self::new(n, d, data)
    }
}

const EIGEN_FLOOR: f64 = 1e-10;

/// PSD square root via symmetric eigendecomposition, clipping eigenvalues
/// below the floor to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig
        .eigenvalues
        .map(|l| if l < EIGEN_FLOOR { 0.0 } else { l.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The cross term uses `tr((S_a S_b)^(1/2)) = tr((A S_b A)^(1/2))` with
/// `A = S_a^(1/2)`, which keeps every square root symmetric.
pub fn frechet_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    if a.d() != b.d() {
        return Err(Error::InvalidArgument(format!(
            "embedding dimensions differ: {} vs {}",
            a.d(),
            b.d()
        )));
    }
    let diff = a.mean() - b.mean();
    let sa = a.covariance();
    let sb = b.covariance();
    let root_a = sqrt_psd(&sa);
    let inner = &root_a * &sb * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&l| if l < EIGEN_FLOOR { 0.0 } else { l.sqrt() })
        .sum();
    let d = diff.norm_squared() + sa.trace() + sb.trace() - 2.0 * cross;
    if !d.is_finite() {
        return Err(Error::NonFinite("frechet distance".into()));
    }
    Ok(d.max(0.0))
}

//! One-sided Wilcoxon signed-rank test on paired scores.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Largest effective sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

/// `x` is the reference run, `y` the candidate; differences are `x - y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScores {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PairedScores {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "paired scores need equal non-zero lengths, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("paired score".into()));
        }
        Ok(Self { x, y })
    }

    /// Builds pairs whose differences `x - y` are exactly `d`.
    pub fn from_differences(d: &[f64]) -> Result<Self> {
        Self::new(d.to_vec(), vec![0.0; d.len()])
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn differences(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).map(|(a, b)| a - b).collect()
    }

    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::NormalApprox => "normal_approx",
        })
    }
}

/// Which rank sum the p-value is taken on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// `P(W+ <= observed)`: the candidate `y` tends to score higher.
    Lower,
    /// `P(W- <= observed)`: the reference `x` tends to score higher.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub w_plus: f64,
    pub n_effective: usize,
    pub p_value: f64,
    pub reject_null: bool,
    pub method: Method,
}

/// Mid-ranks of `values` (1-based), plus the sizes of tie groups.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// `#{sign assignments of ranks 1..=n with W+ <= w}` via subset-sum counts.
fn exact_lower_count(n: usize, w: u64) -> u64 {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts.iter().take(w.min(max as u64) as usize + 1).sum()
}

/// Signed-rank test of `x - y` with the requested tail.
pub fn wilcoxon(pairs: &PairedScores, alpha: f64, tail: Tail) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let d: Vec<f64> = pairs.differences().into_iter().filter(|&v| v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Err(Error::IdenticalScores);
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).fold(0.0, |s, (_, r)| s + r);
    let total = (n * (n + 1)) as f64 / 2.0;
    let observed = match tail {
        Tail::Lower => w_plus,
        Tail::Upper => total - w_plus,
    };

    let (p_value, method) = if n <= EXACT_MAX_N && ties.is_empty() {
        // tie-free ranks are integers, so the rank sum is exact
        let hits = exact_lower_count(n, observed.round() as u64);
        (hits as f64 / (1u64 << n) as f64, Method::Exact)
    } else {
        let nf = n as f64;
        let mean = total / 2.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let z = (observed + 0.5 - mean) / var.sqrt();
        let p = Normal::standard().cdf(z);
        (p.clamp(f64::MIN_POSITIVE, 1.0), Method::NormalApprox)
    };
    Ok(TestResult {
        w_plus,
        n_effective: n,
        p_value,
        reject_null: p_value < alpha,
        method,
    })
}

/// Tests whether `y` (augmented) beats `x` (baseline): `p = P(W+ <= observed)`.
pub fn wilcoxon_one_sided(pairs: &PairedScores, alpha: f64) -> Result<TestResult> {
    wilcoxon(pairs, alpha, Tail::Lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `x` without augmentation, `y` with it.
    #[default]
    Baseline,
    /// `x` trained on a single dataset, `y` on the unified pool.
    UnifiedVsIndividual,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub technique: String,
    pub probability: String,
    pub dataset: String,
}

impl CellKey {
    pub fn new(technique: impl Into<String>, probability: impl Into<String>, dataset: impl Into<String>) -> Self {
        Self {
            technique: technique.into(),
            probability: probability.into(),
            dataset: dataset.into(),
        }
    }
}

/// One table entry. A failed test is kept as a warning rather than
/// aborting the whole table.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceCell {
    pub key: CellKey,
    pub comparison: Comparison,
    pub outcome: std::result::Result<TestResult, String>,
}

impl SignificanceCell {
    pub fn highlighted(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.reject_null)
    }
}

pub fn significance_table(
    cells: &BTreeMap<CellKey, PairedScores>,
    alpha: f64,
    comparison: Comparison,
) -> Vec<SignificanceCell> {
    cells
        .par_iter()
        .map(|(key, pairs)| SignificanceCell {
            key: key.clone(),
            comparison,
            outcome: wilcoxon_one_sided(pairs, alpha).map_err(|e| e.to_string()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p_of(d: &[f64]) -> TestResult {
        wilcoxon_one_sided(&PairedScores::from_differences(d).unwrap(), DEFAULT_ALPHA).unwrap()
    }

    /// Walks every sign vector over ranks 1..=n.
    fn brute_force(d: &[f64]) -> f64 {
        let (ranks, _) = midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let obs: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let n = d.len();
        let mut hits = 0u64;
        for signs in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| signs >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w <= obs {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn all_negative_examples() {
        let r = p_of(&[-1.0, -2.0, -3.0]);
        assert_eq!((r.w_plus, r.p_value, r.reject_null), (0.0, 0.125, false));
        assert_eq!(r.method, Method::Exact);
        let r = p_of(&[-1.0, -2.0, -3.0, -4.0, -5.0]);
        assert_eq!((r.p_value, r.reject_null), (0.03125, true));
    }

    #[test]
    fn identical_scores_error() {
        let pairs = PairedScores::new(vec![0.5, 0.7], vec![0.5, 0.7]).unwrap();
        let err = wilcoxon_one_sided(&pairs, 0.05).unwrap_err();
        assert_eq!(err.to_string(), "degenerate: identical scores");
        assert!(PairedScores::new(vec![], vec![]).is_err());
        assert!(PairedScores::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(wilcoxon_one_sided(&PairedScores::from_differences(&[1.0]).unwrap(), 1.0).is_err());
    }

    #[test]
    fn zeros_are_dropped() {
        let r = p_of(&[0.0, -1.0, -2.0, 0.0, -3.0]);
        assert_eq!(r.n_effective, 3);
        assert_eq!(r.p_value, 0.125);
    }

    #[test]
    fn exact_matches_brute_force() {
        let cases: [&[f64]; 4] = [
            &[0.3, -1.2, 2.5, -0.1],
            &[1.0, 2.0, -3.0, 4.0, -5.0, 6.0],
            &[-0.5, 0.25, -4.0, 8.0, 1.5, -2.0, 3.0],
            &[5.0, 4.0, 3.0],
        ];
        for d in cases {
            assert_eq!(p_of(d).p_value, brute_force(d), "{d:?}");
        }
    }

    #[test]
    fn swap_flips_tail() {
        let d = [0.7, -0.2, 1.9, -3.3];
        let pairs = PairedScores::new(d.to_vec(), vec![0.0; 4]).unwrap();
        let lower = wilcoxon(&pairs, 0.05, Tail::Lower).unwrap();
        let upper_swapped = wilcoxon(&pairs.swapped(), 0.05, Tail::Upper).unwrap();
        assert_eq!(lower.p_value, upper_swapped.p_value);
    }

    #[test]
    fn ties_use_normal_approx() {
        let r = p_of(&[-1.0, -1.0, -2.0, -3.0, 1.0]);
        assert_eq!(r.method, Method::NormalApprox);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        let big: Vec<f64> = (1..=30).map(|i| -(i as f64)).collect();
        let r = p_of(&big);
        assert_eq!(r.method, Method::NormalApprox);
        assert!(r.reject_null);
    }

    #[test]
    fn table_keeps_failures_per_cell() {
        let mut cells = BTreeMap::new();
        cells.insert(
            CellKey::new("Flip", "0.1", "a"),
            PairedScores::from_differences(&[-1.0, -2.0, -3.0, -4.0, -5.0]).unwrap(),
        );
        cells.insert(
            CellKey::new("Rotate", "0.1", "a"),
            PairedScores::from_differences(&[0.0, 0.0]).unwrap(),
        );
        let t = significance_table(&cells, 0.05, Comparison::Baseline);
        assert_eq!(t.len(), 2);
        assert!(t[0].highlighted());
        assert_eq!(t[1].outcome.as_ref().unwrap_err(), "degenerate: identical scores");
        assert!(significance_table(&BTreeMap::new(), 0.05, Comparison::Baseline).is_empty());
    }
}

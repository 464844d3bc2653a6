//! Deterministic CT-like slices for fixtures and benchmarks.
//!
//! Canonical classes: 0 background, 1 lung, 2 lesion. Lesions are discs
//! clipped to the lung field.

use std::collections::{BTreeMap, BTreeSet};

use crate::datasetprep::LabelMap;
use crate::error::Result;
use crate::raster::{Image, Mask, Sample};
use crate::rng::RngStream;

pub const LUNG_CLASS: u8 = 1;
pub const LESION_CLASS: u8 = 2;

/// Raw on-disk values `{0, 128, 255}` for background, lung and lesion.
pub fn label_map(dataset_id: &str) -> LabelMap {
    LabelMap::new(
        dataset_id,
        BTreeMap::from([(0, 0), (128, LUNG_CLASS), (255, LESION_CLASS)]),
        BTreeSet::from([LESION_CLASS]),
        BTreeSet::from([LUNG_CLASS]),
    )
    .expect("synthetic label map is valid")
}

fn inside(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    let (u, v) = ((x - cx) / rx, (y - cy) / ry);
    u * u + v * v <= 1.0
}

/// One slice with two elliptical lungs and `lesions` discs inside them.
pub fn slice(width: usize, height: usize, lesions: usize, rng: &mut RngStream) -> (Image, Mask) {
    let (w, h) = (width as f64, height as f64);
    let lungs: Vec<(f64, f64, f64, f64)> = [0.3, 0.7]
        .iter()
        .map(|&fx| {
            (
                fx * w + rng.uniform(-0.02, 0.02) * w,
                0.5 * h + rng.uniform(-0.03, 0.03) * h,
                0.15 * w * (1.0 + rng.uniform(-0.1, 0.1)),
                0.3 * h * (1.0 + rng.uniform(-0.1, 0.1)),
            )
        })
        .collect();
    let in_lung = |x: f64, y: f64| lungs.iter().any(|&(cx, cy, rx, ry)| inside(x, y, cx, cy, rx, ry));
    let mut discs = Vec::with_capacity(lesions);
    for _ in 0..lesions {
        let (cx, cy, rx, ry) = lungs[rng.index(2)];
        let t = rng.uniform(0.0, std::f64::consts::TAU);
        let s = rng.uniform(0.0, 0.7);
        let r = rng.uniform(0.02, 0.06) * w.min(h);
        discs.push((cx + s * rx * t.cos(), cy + s * ry * t.sin(), r.max(1.0)));
    }
    let mut px = Vec::with_capacity(width * height);
    let mut labels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let noise = rng.uniform(-8.0, 8.0);
            let lesion = in_lung(fx, fy) && discs.iter().any(|&(cx, cy, r)| inside(fx, fy, cx, cy, r, r));
            let (base, label) = if lesion {
                (150.0, LESION_CLASS)
            } else if in_lung(fx, fy) {
                (30.0, LUNG_CLASS)
            } else if inside(fx, fy, 0.5 * w, 0.5 * h, 0.46 * w, 0.43 * h) {
                (110.0, 0)
            } else {
                (5.0, 0)
            };
            px.push((base + noise).round().clamp(0.0, 255.0) as u8);
            labels.push(label);
        }
    }
    (
        Image::new(width, height, px).expect("sized"),
        Mask::new(width, height, labels).expect("sized"),
    )
}

/// `count` samples where every `empty_every`-th one (if non-zero) has no lesion.
pub fn dataset(
    dataset_id: &str,
    count: usize,
    width: usize,
    height: usize,
    empty_every: usize,
    rng: &mut RngStream,
) -> Result<Vec<Sample>> {
    (0..count)
        .map(|i| {
            let lesions = if empty_every > 0 && i % empty_every == empty_every - 1 {
                0
            } else {
                1 + rng.index(3)
            };
            let (image, mask) = slice(width, height, lesions, rng);
            Sample::new(image, mask, dataset_id, format!("{dataset_id}_{i:04}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn slices_have_lungs_and_requested_lesions() {
        let (_, m) = slice(64, 64, 2, &mut derive_stream(1, "syn", 0, 0));
        let set = m.label_set();
        assert!(set.contains(&LUNG_CLASS) && set.contains(&LESION_CLASS));
        let (_, m) = slice(64, 64, 0, &mut derive_stream(1, "syn", 0, 1));
        assert!(!m.label_set().contains(&LESION_CLASS));
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = dataset("d", 6, 32, 32, 3, &mut derive_stream(9, "syn", 0, 0)).unwrap();
        let b = dataset("d", 6, 32, 32, 3, &mut derive_stream(9, "syn", 0, 0)).unwrap();
        assert_eq!(a, b);
        let map = label_map("d");
        let (kept, removed) = crate::datasetprep::filter_samples(a, &map);
        assert_eq!((kept.len(), removed.len()), (4, 2));
    }
}

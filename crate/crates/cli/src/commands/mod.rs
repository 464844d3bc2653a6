pub mod augment;
pub mod compose;
pub mod eval;
pub mod fixture;
pub mod prepare;
pub mod report;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::Context;
use ctaug_core::datasetprep::LabelMap;
use ctaug_core::io::{load_sample, save_raster, save_sample};
use ctaug_core::{ManifestRecord, Sample};

use crate::config::RunConfig;

/// Loads a manifest record, translating the mask to canonical classes.
pub fn load_record(root: &Path, rec: &ManifestRecord, maps: &BTreeMap<String, LabelMap>) -> anyhow::Result<Sample> {
    let map = &maps[&rec.dataset_id];
    load_sample(&rec.resolve_image(root), &rec.resolve_mask(root), map)
        .with_context(|| format!("sample {}", rec.sample_key()))
}

/// Saves a sample with its mask encoded back to raw dataset values.
pub fn save_encoded(sample: &Sample, map: &LabelMap, image: &Path, mask: &Path) -> anyhow::Result<()> {
    match sample.label_space {
        ctaug_core::LabelSpace::Dataset => {
            save_raster(&sample.image, image)?;
            save_raster(&map.encode_raw(&sample.mask)?, mask)?;
        }
        ctaug_core::LabelSpace::Binary => save_sample(sample, image, mask)?,
    }
    Ok(())
}

/// Label maps for every dataset referenced by `records`.
pub fn maps_for(cfg: &RunConfig, records: &[ManifestRecord]) -> anyhow::Result<BTreeMap<String, LabelMap>> {
    let ids: BTreeSet<String> = records.iter().map(|r| r.dataset_id.clone()).collect();
    cfg.label_maps_for(&ids)
}

pub fn png_files(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") && entry.file_type()?.is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

use std::path::PathBuf;

use anyhow::Context;
use ctaug_core::compositor::{
    check_fraction, compose, draw_pairs, expansion_count, lung_area, plan_layout, CompositeParams, CompositeRecipe,
    HealthySample, HealthySource, LesionSample, COMPOSITE_DATASET, DEFAULT_RETRY_BUDGET,
};
use ctaug_core::io::{load_image, load_mask_raw, save_sample};
use ctaug_core::manifest::{read_manifest, write_manifest};
use ctaug_core::{derive_stream, Mask, ManifestRecord, Raster, Split};
use rayon::prelude::*;

use super::{load_record, maps_for, png_files};
use crate::config::RunConfig;
use crate::exit::Invalid;
use crate::output::{absolute, write_csv, write_file};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Training manifest whose records supply lesions.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory with `images/` and `lungs/` (nonzero = lung).
    #[arg(long)]
    healthy_dir: Option<PathBuf>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    blend_weight: Option<f64>,
    #[arg(long)]
    smooth_kernel: Option<usize>,
    /// Mirror every lesion sample before transplanting.
    #[arg(long)]
    flip: bool,
}

impl Args {
    pub fn apply_overrides(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.compose;
        if let Some(d) = &self.healthy_dir {
            c.healthy_dir = Some(d.clone());
        }
        if let Some(f) = self.fraction {
            c.fraction = f;
        }
        if let Some(t) = self.tolerance {
            c.size_tolerance = t;
        }
        if let Some(b) = self.blend_weight {
            c.blend_weight = b;
        }
        if let Some(k) = self.smooth_kernel {
            c.smooth_kernel = k;
        }
        c.flip_lesion |= self.flip;
    }
}

fn load_healthy(dir: &std::path::Path) -> anyhow::Result<Vec<HealthySample>> {
    let names = png_files(&dir.join("images"))?;
    if names.is_empty() {
        return Err(Invalid(format!("no healthy images under {}", dir.join("images").display())).into());
    }
    names
        .par_iter()
        .map(|name| {
            let image = load_image(&dir.join("images").join(name))?;
            let raw = load_mask_raw(&dir.join("lungs").join(name))?;
            let lungs: Vec<u8> = raw.labels().iter().map(|&v| u8::from(v != 0)).collect();
            let lungs = Mask::new(raw.width(), raw.height(), lungs)?;
            let id = name.trim_end_matches(".png").trim_end_matches(".PNG").to_string();
            HealthySample::new(id, image, lungs, HealthySource::Other).with_context(|| format!("healthy {name}"))
        })
        .collect()
}

pub fn run(cfg: &RunConfig, args: &Args) -> anyhow::Result<()> {
    let root = cfg.data_root()?;
    let out = cfg.output_root()?.join("compose");
    let c = &cfg.compose;
    check_fraction(c.fraction)?;
    let params = CompositeParams {
        flip_lesion: c.flip_lesion,
        blend_weight: c.blend_weight,
        smooth_kernel: c.smooth_kernel,
        size_tolerance: c.size_tolerance,
    };
    params.validate()?;
    let healthy_dir = c
        .healthy_dir
        .as_ref()
        .ok_or_else(|| Invalid("no healthy pool: pass --healthy-dir or set compose.healthy_dir".into()))?;

    let records = read_manifest(&args.manifest)?;
    let train: Vec<&ManifestRecord> = records
        .iter()
        .filter(|r| r.split == Split::Train && r.dataset_id != COMPOSITE_DATASET)
        .collect();
    let maps = maps_for(cfg, &records)?;
    let healthy = load_healthy(healthy_dir)?;
    let lesions = train
        .par_iter()
        .map(|r| {
            let s = load_record(root, r, &maps)?;
            let map = &maps[&r.dataset_id];
            let lesion: Vec<u8> = s.mask.labels().iter().map(|&l| u8::from(map.is_lesion(l))).collect();
            let lesion = Mask::new(s.mask.width(), s.mask.height(), lesion)?;
            Ok(LesionSample::new(r.sample_key(), s.image, lesion, map.lung_mask(&s.mask))?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let count = expansion_count(train.len(), c.fraction);
    let ha: Vec<usize> = healthy.iter().map(|h| lung_area(&h.lung_mask)).collect();
    let la: Vec<usize> = lesions.iter().map(|l| lung_area(&l.lung_mask)).collect();
    let recipe = |h: usize, l: usize| CompositeRecipe {
        healthy: &healthy[h],
        lesion: &lesions[l],
        params,
    };
    let pairs = draw_pairs(
        count,
        &ha,
        &la,
        params.size_tolerance,
        DEFAULT_RETRY_BUDGET,
        &mut derive_stream(cfg.master_seed, "compose", 0, 0),
        |h, l| plan_layout(&recipe(h, l)).is_ok(),
    )?;
    let composed = pairs
        .par_iter()
        .enumerate()
        .map(|(i, &(h, l))| {
            let c = compose(&recipe(h, l))?;
            let stem = format!("{i:05}_{}", c.sample.sample_id.replace(['/', ':'], "_"));
            let image = out.join("files").join(format!("{stem}.png"));
            let mask = out.join("files").join(format!("{stem}_mask.png"));
            save_sample(&c.sample, &image, &mask)?;
            let rec = ManifestRecord {
                image_path: absolute(&image)?.to_string_lossy().into_owned(),
                mask_path: absolute(&mask)?.to_string_lossy().into_owned(),
                dataset_id: COMPOSITE_DATASET.to_string(),
                split: Split::Train,
                fold: None,
                replicate_index: 0,
            };
            Ok((rec, c.provenance))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut manifest = records.clone();
    let mut provenance = String::new();
    for (rec, prov) in &composed {
        manifest.push(rec.clone());
        provenance.push_str(&serde_json::to_string(prov)?);
        provenance.push('\n');
    }
    write_manifest(&out.join("manifest.jsonl"), &manifest)?;
    write_file(&out.join("provenance.jsonl"), provenance.as_bytes())?;
    write_csv(
        &out.join("summary.csv"),
        &["train_records", "healthy_pool", "composites", "fraction"],
        &[vec![
            train.len().to_string(),
            healthy.len().to_string(),
            composed.len().to_string(),
            c.fraction.to_string(),
        ]],
        cfg.master_seed,
    )?;
    println!(
        "composed {} images from {} training records and {} healthy slices",
        composed.len(),
        train.len(),
        healthy.len()
    );
    Ok(())
}

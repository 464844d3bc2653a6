use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ctaug_core::datasetprep::LabelMap;
use ctaug_core::manifest::{read_manifest, write_manifest};
use ctaug_core::scheduler::{augment_batch, batch_gate, parse_transform_config, AugmentationPlan, Batch, GateMode};
use ctaug_core::{apply_transform, derive_stream, ManifestRecord, Split};
use rayon::prelude::*;

use super::{load_record, maps_for, save_encoded};
use crate::config::RunConfig;
use crate::exit::Invalid;
use crate::output::{absolute, prob_tag, write_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    /// Materialize gated training batches exactly as a trainer would see them.
    OnlinePreview,
    /// Write one augmented copy per gated training record and extend the manifest.
    Offline,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Transform config (JSON array, object or JSON lines); defaults to the config's plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Overrides the probability of every plan entry.
    #[arg(long)]
    probability: Option<f64>,
    /// Limit on previewed batches.
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    epoch: u64,
    /// Draw the gate per image instead of per batch.
    #[arg(long)]
    per_image_gate: bool,
}

fn load_plans(cfg: &RunConfig, args: &Args) -> anyhow::Result<Vec<AugmentationPlan>> {
    let path = args
        .plan
        .as_ref()
        .or(cfg.plan.as_ref())
        .ok_or_else(|| Invalid("no transform plan: pass --plan or set plan".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Invalid(format!("plan {}: {e}", path.display())))?;
    let plans = parse_transform_config(&text).with_context(|| format!("plan {}", path.display()))?;
    plans
        .into_iter()
        .map(|p| {
            let p = match args.probability {
                Some(prob) => AugmentationPlan::new(p.spec().clone(), prob)?,
                None => p,
            };
            Ok(if args.per_image_gate { p.with_gate(GateMode::PerImage) } else { p })
        })
        .collect()
}

fn plan_dir(out: &Path, index: usize, plan: &AugmentationPlan) -> PathBuf {
    out.join("augment")
        .join(format!("{index:02}-{}-{}", plan.kind(), prob_tag(plan.probability())))
}

fn generated_record(src: &ManifestRecord, image: &Path, mask: &Path) -> anyhow::Result<ManifestRecord> {
    Ok(ManifestRecord {
        image_path: absolute(image)?.to_string_lossy().into_owned(),
        mask_path: absolute(mask)?.to_string_lossy().into_owned(),
        ..src.clone()
    })
}

fn preview(
    cfg: &RunConfig,
    args: &Args,
    plan: &AugmentationPlan,
    dir: &Path,
    train: &[&ManifestRecord],
    maps: &BTreeMap<String, LabelMap>,
) -> anyhow::Result<()> {
    let root = cfg.data_root()?;
    let seed = cfg.master_seed;
    let batch_size = args.batch_size.unwrap_or(cfg.batch_size);
    let limit = args.batches.unwrap_or(usize::MAX);
    let mut records = Vec::new();
    let mut gates = Vec::new();
    for (bi, chunk) in train.chunks(batch_size).take(limit).enumerate() {
        let bi = bi as u64;
        let samples = chunk
            .par_iter()
            .map(|r| load_record(root, r, maps))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let out = augment_batch(&Batch::new(samples, args.epoch, bi)?, plan, seed)
            .with_context(|| format!("batch {bi}"))?;
        let applied = match plan.gate() {
            GateMode::PerBatch => batch_gate(plan.probability(), seed, args.epoch, bi).to_string(),
            GateMode::PerImage => "per-image".to_string(),
        };
        gates.push(vec![bi.to_string(), chunk.len().to_string(), applied]);
        let written = out
            .samples()
            .par_iter()
            .zip(chunk.par_iter())
            .enumerate()
            .map(|(pos, (s, src))| {
                let stem = format!("b{bi:05}_{pos:02}_{}_{}", src.dataset_id, src.stem());
                let image = dir.join("preview").join(format!("{stem}.png"));
                let mask = dir.join("preview").join(format!("{stem}_mask.png"));
                save_encoded(s, &maps[&src.dataset_id], &image, &mask)?;
                generated_record(src, &image, &mask)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        records.extend(written);
    }
    write_manifest(&dir.join("manifest.jsonl"), &records)?;
    write_csv(&dir.join("gates.csv"), &["batch_index", "size", "applied"], &gates, seed)?;
    println!("{}: previewed {} batches", plan.kind(), gates.len());
    Ok(())
}

fn offline(
    cfg: &RunConfig,
    args: &Args,
    plan: &AugmentationPlan,
    dir: &Path,
    all: &[ManifestRecord],
    maps: &BTreeMap<String, LabelMap>,
) -> anyhow::Result<()> {
    let root = cfg.data_root()?;
    let seed = cfg.master_seed;
    let train: Vec<(usize, &ManifestRecord)> = all
        .iter()
        .filter(|r| r.split == Split::Train)
        .enumerate()
        .collect();
    let generated = train
        .par_iter()
        .map(|&(i, src)| {
            let i = i as u64;
            if !derive_stream(seed, "offline-gate", args.epoch, i).bernoulli(plan.probability()) {
                return Ok(None);
            }
            let sample = load_record(root, src, maps)?;
            let out = apply_transform(&sample, plan.spec(), &mut derive_stream(seed, "offline", args.epoch, i))
                .with_context(|| format!("{} on {}", plan.kind(), src.sample_key()))?;
            let stem = format!("{}__aug{i:05}", src.stem());
            let base = dir.join("files").join(&src.dataset_id);
            let (image, mask) = (base.join(format!("{stem}.png")), base.join(format!("{stem}_mask.png")));
            save_encoded(&out, &maps[&src.dataset_id], &image, &mask)?;
            generated_record(src, &image, &mask).map(Some)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let generated: Vec<ManifestRecord> = generated.into_iter().flatten().collect();
    let mut records = all.to_vec();
    records.extend(generated.iter().cloned());
    write_manifest(&dir.join("manifest.jsonl"), &records)?;
    write_csv(
        &dir.join("summary.csv"),
        &["kind", "probability", "train_records", "generated"],
        &[vec![
            plan.kind().to_string(),
            plan.probability().to_string(),
            train.len().to_string(),
            generated.len().to_string(),
        ]],
        seed,
    )?;
    println!("{}: {} augmented copies of {} training records", plan.kind(), generated.len(), train.len());
    Ok(())
}

pub fn run(cfg: &RunConfig, args: &Args) -> anyhow::Result<()> {
    let out = cfg.output_root()?;
    let plans = load_plans(cfg, args)?;
    let records = read_manifest(&args.manifest)?;
    let maps = maps_for(cfg, &records)?;
    let train: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == Split::Train).collect();
    for (i, plan) in plans.iter().enumerate() {
        let dir = plan_dir(out, i, plan);
        match args.mode {
            Mode::OnlinePreview => preview(cfg, args, plan, &dir, &train, &maps)?,
            Mode::Offline => offline(cfg, args, plan, &dir, &records, &maps)?,
        }
    }
    Ok(())
}

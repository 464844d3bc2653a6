use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use ctaug_core::datasetprep::{balance_factors, filter_samples, make_folds, split_pareto, BalanceMode, LabelMap};
use ctaug_core::io::load_sample;
use ctaug_core::manifest::write_manifest;
use ctaug_core::{derive_stream, ManifestRecord, Split};
use rayon::prelude::*;

use super::png_files;
use crate::config::RunConfig;
use crate::exit::Invalid;
use crate::output::write_csv;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset ids (default: config list, else every subdirectory with a label map).
    #[arg(long, value_delimiter = ',')]
    datasets: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Sizes that feed the replication factor.
    #[arg(long, value_enum)]
    balance_on: Option<BalanceArg>,
    /// Skip the unified training manifest.
    #[arg(long)]
    no_unify: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum BalanceArg {
    Train,
    Whole,
}

impl Args {
    pub fn apply_overrides(&self, cfg: &mut RunConfig) {
        if !self.datasets.is_empty() {
            cfg.datasets = self.datasets.clone();
        }
        if let Some(k) = self.k {
            cfg.k_folds = k;
        }
        if let Some(b) = self.balance_on {
            cfg.balance = Some(match b {
                BalanceArg::Train => BalanceMode::Train,
                BalanceArg::Whole => BalanceMode::Whole,
            });
        }
        if self.no_unify {
            cfg.balance = None;
        }
    }
}

struct Prepared {
    id: String,
    total: usize,
    removed: Vec<String>,
    kept: usize,
    train: Vec<ManifestRecord>,
    test: Vec<ManifestRecord>,
}

fn discover(root: &Path) -> anyhow::Result<Vec<String>> {
    let mut ids = Vec::new();
    for e in std::fs::read_dir(root).with_context(|| format!("listing {}", root.display()))? {
        let e = e?;
        if e.path().join("label_map.json").is_file() && e.path().join("images").is_dir() {
            ids.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

fn prepare_one(cfg: &RunConfig, root: &Path, id: &str, map: &LabelMap) -> anyhow::Result<Prepared> {
    let names = png_files(&root.join(id).join("images"))?;
    if names.is_empty() {
        bail!("dataset {id}: no images under {}", root.join(id).join("images").display());
    }
    // Rasters are dropped as soon as the lesion check is done.
    let checked = names
        .par_iter()
        .map(|name| {
            let rec = ManifestRecord {
                image_path: format!("{id}/images/{name}"),
                mask_path: format!("{id}/masks/{name}"),
                dataset_id: id.to_string(),
                split: Split::Train,
                fold: None,
                replicate_index: 0,
            };
            let sample = load_sample(&rec.resolve_image(root), &rec.resolve_mask(root), map)
                .with_context(|| format!("dataset {id}: {name}"))?;
            let (kept, _) = filter_samples(vec![sample], map);
            Ok((rec, !kept.is_empty()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let total = checked.len();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (rec, keep) in checked {
        if keep {
            kept.push(rec);
        } else {
            removed.push(rec.stem());
        }
    }
    let seed = cfg.master_seed;
    let (mut train, mut test) = split_pareto(&kept, &mut derive_stream(seed, &format!("split/{id}"), 0, 0))
        .with_context(|| format!("dataset {id}"))?;
    let folds = make_folds(&train, cfg.k_folds, &mut derive_stream(seed, &format!("folds/{id}"), 0, 0))
        .with_context(|| format!("dataset {id}"))?
        .with_test_ids(&test)?;
    for r in &mut train {
        r.fold = folds.fold_of(&r.sample_key());
    }
    for r in &mut test {
        r.split = Split::Test;
    }
    train.sort_by(|a, b| a.image_path.cmp(&b.image_path));
    test.sort_by(|a, b| a.image_path.cmp(&b.image_path));
    Ok(Prepared {
        id: id.to_string(),
        total,
        kept: kept.len(),
        removed,
        train,
        test,
    })
}

pub fn run(cfg: &RunConfig, _args: &Args) -> anyhow::Result<()> {
    let root = cfg.data_root()?;
    let out = cfg.output_root()?;
    let ids = if cfg.datasets.is_empty() { discover(root)? } else { cfg.datasets.clone() };
    if ids.is_empty() {
        bail!(Invalid(format!("no datasets found under {}", root.display())));
    }
    let maps = cfg.label_maps_for(&ids)?;
    let mut prepared = Vec::new();
    for id in &ids {
        let p = prepare_one(cfg, root, id, &maps[id])?;
        let mut records = p.train.clone();
        records.extend(p.test.iter().cloned());
        write_manifest(&out.join("manifests").join(format!("{id}.jsonl")), &records)?;
        println!(
            "{id}: {} slices, removed {} without lesion, train {}, test {}",
            p.total,
            p.removed.len(),
            p.train.len(),
            p.test.len()
        );
        prepared.push(p);
    }
    prepared.sort_by(|a, b| a.id.cmp(&b.id));

    let seed = cfg.master_seed;
    let removal_rows: Vec<Vec<String>> = prepared
        .iter()
        .map(|p| {
            vec![
                p.id.clone(),
                p.total.to_string(),
                p.removed.len().to_string(),
                p.kept.to_string(),
                p.train.len().to_string(),
                p.test.len().to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("removal_report.csv"),
        &["dataset", "total", "removed", "kept", "train", "test"],
        &removal_rows,
        seed,
    )?;
    let removed_rows: Vec<Vec<String>> = prepared
        .iter()
        .flat_map(|p| p.removed.iter().map(|s| vec![p.id.clone(), s.clone()]))
        .collect();
    write_csv(&out.join("removed_samples.csv"), &["dataset", "sample_id"], &removed_rows, seed)?;
    let fold_rows: Vec<Vec<String>> = prepared
        .iter()
        .flat_map(|p| {
            let mut sizes = vec![0usize; cfg.k_folds];
            for r in &p.train {
                sizes[r.fold.expect("train records carry a fold")] += 1;
            }
            sizes
                .into_iter()
                .enumerate()
                .map(|(f, n)| vec![p.id.clone(), f.to_string(), n.to_string()])
                .collect::<Vec<_>>()
        })
        .collect();
    write_csv(&out.join("folds.csv"), &["dataset", "fold", "size"], &fold_rows, seed)?;

    if let (Some(mode), true) = (cfg.balance, prepared.len() >= 2) {
        let sizes: BTreeMap<String, usize> = prepared
            .iter()
            .map(|p| {
                let n = match mode {
                    BalanceMode::Train => p.train.len(),
                    BalanceMode::Whole => p.kept,
                };
                (p.id.clone(), n)
            })
            .collect();
        let report = balance_factors(&sizes)?;
        let mut unified = Vec::new();
        for (entry, p) in report.entries.iter().zip(&prepared) {
            for replicate_index in 0..entry.factor {
                unified.extend(p.train.iter().map(|r| ManifestRecord {
                    replicate_index,
                    ..r.clone()
                }));
            }
        }
        write_manifest(&out.join("manifests").join("unified_train.jsonl"), &unified)?;
        let rows: Vec<Vec<String>> = report
            .entries
            .iter()
            .map(|e| {
                vec![
                    e.dataset_id.clone(),
                    e.size.to_string(),
                    e.factor.to_string(),
                    (e.factor * prepared.iter().find(|p| p.id == e.dataset_id).map_or(0, |p| p.train.len()))
                        .to_string(),
                    (e.dataset_id == report.largest).to_string(),
                ]
            })
            .collect();
        write_csv(
            &out.join("balance_report.csv"),
            &["dataset", "size", "factor", "replicated_train", "largest"],
            &rows,
            seed,
        )?;
        println!("unified training set: {} records", unified.len());
    }
    Ok(())
}

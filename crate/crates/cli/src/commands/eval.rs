use std::path::{Path, PathBuf};

use anyhow::bail;
use ctaug_core::io::load_mask_raw;
use ctaug_core::manifest::read_manifest;
use ctaug_core::metrics::{aggregate, confusion, frechet_distance, EmbeddingSet, EvalRecord, GroupDim, GroupKey};
use ctaug_core::{Mask, ManifestRecord, Raster, Split};
use rayon::prelude::*;

use super::{load_record, maps_for};
use crate::config::RunConfig;
use crate::exit::Invalid;
use crate::output::{write_csv, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Predicted masks at `<pred-root>/<dataset>/<stem>.png`; nonzero = lesion.
    #[arg(long)]
    pred_root: Option<PathBuf>,
    #[arg(long, default_value = "none")]
    technique: String,
    #[arg(long, default_value = "0")]
    probability: String,
    /// Fold of the model that produced the predictions.
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Real-image embeddings (header `n d`, then rows; `.bin` = little-endian f64).
    #[arg(long, requires = "embeddings_b")]
    embeddings_a: Option<PathBuf>,
    /// Generated-image embeddings.
    #[arg(long, requires = "embeddings_a")]
    embeddings_b: Option<PathBuf>,
    /// Output subdirectory under `<out>/eval/`.
    #[arg(long, default_value = "run")]
    tag: String,
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn selected(r: &ManifestRecord, split: SplitArg) -> bool {
    match split {
        SplitArg::Train => r.split == Split::Train,
        SplitArg::Test => r.split == Split::Test,
        SplitArg::All => true,
    }
}

fn binarize(mask: &Mask, lesion: impl Fn(u8) -> bool) -> anyhow::Result<Mask> {
    let labels = mask.labels().iter().map(|&v| u8::from(lesion(v))).collect();
    Ok(Mask::new(mask.width(), mask.height(), labels)?)
}

fn score(cfg: &RunConfig, args: &Args, manifest: &Path, pred_root: &Path, dir: &Path) -> anyhow::Result<()> {
    let root = cfg.data_root()?;
    let seed = cfg.master_seed;
    let records: Vec<ManifestRecord> = read_manifest(manifest)?
        .into_iter()
        .filter(|r| selected(r, args.split))
        .collect();
    if records.is_empty() {
        bail!(Invalid(format!("{}: no records in the selected split", manifest.display())));
    }
    let pred_path = |r: &ManifestRecord| pred_root.join(&r.dataset_id).join(format!("{}.png", r.stem()));
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !pred_path(r).is_file())
        .map(|r| pred_path(r).display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("{} predictions missing:\n  {}", missing.len(), missing.join("\n  "));
    }
    let maps = maps_for(cfg, &records)?;
    let evals = records
        .par_iter()
        .map(|r| {
            let s = load_record(root, r, &maps)?;
            let map = &maps[&r.dataset_id];
            let truth = binarize(&s.mask, |c| map.is_lesion(c))?;
            let pred = binarize(&load_mask_raw(&pred_path(r))?, |v| v != 0)?;
            let counts = confusion(&pred, &truth).map_err(|e| anyhow::anyhow!("{}: {e}", r.sample_key()))?;
            let group = GroupKey {
                technique: args.technique.clone(),
                probability: args.probability.clone(),
                dataset: r.dataset_id.clone(),
                fold: args.fold.or(r.fold),
            };
            Ok(EvalRecord::new(r.sample_key(), group, counts))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let rows: Vec<Vec<String>> = evals
        .iter()
        .map(|e| {
            vec![
                e.sample_id.clone(),
                e.group.technique.clone(),
                e.group.probability.clone(),
                e.group.dataset.clone(),
                e.group.fold.map_or(String::new(), |f| f.to_string()),
                e.counts.tp.to_string(),
                e.counts.fp.to_string(),
                e.counts.fn_.to_string(),
                e.counts.tn.to_string(),
                f(e.fscore),
                f(e.iou),
            ]
        })
        .collect();
    write_csv(&dir.join("per_image.csv"), &PER_IMAGE_HEADER, &rows, seed)?;

    let table = aggregate(&evals, &[GroupDim::Technique, GroupDim::Probability, GroupDim::Dataset])?;
    let agg_rows = |rows: &[ctaug_core::metrics::AggregateRow]| -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| {
                let mut v = r.key.clone();
                v.push(r.fold.map_or(String::new(), |f| f.to_string()));
                v.extend([
                    r.n.to_string(),
                    f(r.mean_fscore),
                    f(r.mean_iou),
                    f(r.micro_fscore),
                    f(r.micro_iou),
                ]);
                v
            })
            .collect()
    };
    write_csv(&dir.join("per_fold.csv"), &AGG_HEADER, &agg_rows(&table.per_fold), seed)?;
    write_csv(&dir.join("summary.csv"), &AGG_HEADER, &agg_rows(&table.per_group), seed)?;
    for r in &table.per_group {
        println!(
            "{}: F-score {:.4} IoU {:.4}",
            r.key.join(" / "),
            r.mean_fscore,
            r.mean_iou
        );
    }
    Ok(())
}

pub const PER_IMAGE_HEADER: [&str; 11] = [
    "sample_id",
    "technique",
    "probability",
    "dataset",
    "fold",
    "tp",
    "fp",
    "fn",
    "tn",
    "fscore",
    "iou",
];

const AGG_HEADER: [&str; 9] = [
    "technique",
    "probability",
    "dataset",
    "fold",
    "n",
    "mean_fscore",
    "mean_iou",
    "micro_fscore",
    "micro_iou",
];

/// Rebuilds evaluation records from a `per_image.csv`.
pub fn read_per_image(path: &Path) -> anyhow::Result<Vec<EvalRecord>> {
    let t = Table::read(path)?;
    let cols = PER_IMAGE_HEADER
        .iter()
        .map(|h| t.column(h))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let count = |row: &csv::StringRecord, i: usize| -> anyhow::Result<u64> {
        row[cols[i]]
            .parse()
            .map_err(|_| Invalid(format!("{}: bad count {:?}", path.display(), &row[cols[i]])).into())
    };
    t.rows
        .iter()
        .map(|row| {
            let fold = match &row[cols[4]] {
                "" => None,
                s => Some(s.parse().map_err(|_| Invalid(format!("{}: bad fold {s:?}", path.display())))?),
            };
            let group = GroupKey {
                technique: row[cols[1]].to_string(),
                probability: row[cols[2]].to_string(),
                dataset: row[cols[3]].to_string(),
                fold,
            };
            let counts = ctaug_core::metrics::ConfusionCounts {
                tp: count(row, 5)?,
                fp: count(row, 6)?,
                fn_: count(row, 7)?,
                tn: count(row, 8)?,
            };
            Ok(EvalRecord::new(&row[cols[0]], group, counts))
        })
        .collect()
}

pub fn run(cfg: &RunConfig, args: &Args) -> anyhow::Result<()> {
    let dir = cfg.output_root()?.join("eval").join(&args.tag);
    let mut did = false;
    match (&args.manifest, &args.pred_root) {
        (Some(m), Some(p)) => {
            score(cfg, args, m, p, &dir)?;
            did = true;
        }
        (None, None) => {}
        _ => bail!(Invalid("--manifest and --pred-root go together".into())),
    }
    if let (Some(a), Some(b)) = (&args.embeddings_a, &args.embeddings_b) {
        let d = frechet_distance(&EmbeddingSet::read(a)?, &EmbeddingSet::read(b)?)?;
        write_csv(
            &dir.join("fid.csv"),
            &["set_a", "set_b", "frechet_distance"],
            &[vec![a.display().to_string(), b.display().to_string(), format!("{d:.6}")]],
            cfg.master_seed,
        )?;
        println!("Fréchet distance: {d:.6}");
        did = true;
    }
    if !did {
        bail!(Invalid("nothing to evaluate: pass --manifest/--pred-root or --embeddings-a/-b".into()));
    }
    Ok(())
}

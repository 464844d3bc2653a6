use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::bail;
use ctaug_core::metrics::{aggregate, GroupDim};

use super::eval::read_per_image;
use crate::config::RunConfig;
use crate::exit::Invalid;
use crate::output::{write_csv, write_file};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// One or more `per_image.csv` files written by `eval`.
    #[arg(long, required = true, num_args = 1..)]
    records: Vec<PathBuf>,
    /// Technique whose fold scores pair with every other technique.
    #[arg(long, default_value = "none")]
    baseline: String,
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

pub fn run(cfg: &RunConfig, args: &Args) -> anyhow::Result<()> {
    let mut records = Vec::new();
    for p in &args.records {
        records.extend(read_per_image(p)?);
    }
    if records.is_empty() {
        bail!(Invalid("no evaluation records".into()));
    }
    let seed = cfg.master_seed;
    let out = cfg.output_root()?.join("report");
    let table = aggregate(&records, &[GroupDim::Technique, GroupDim::Probability, GroupDim::Dataset])?;

    let mut rows = Vec::new();
    let mut text = String::new();
    writeln!(
        text,
        "{:<22} {:>6} {:<14} {:>5} {:>8} {:>8} {:>8} {:>8}",
        "technique", "p", "dataset", "folds", "F", "IoU", "F micro", "IoU mic"
    )?;
    for r in &table.per_group {
        writeln!(
            text,
            "{:<22} {:>6} {:<14} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.key[0], r.key[1], r.key[2], r.n, r.mean_fscore, r.mean_iou, r.micro_fscore, r.micro_iou
        )?;
        let mut row = r.key.clone();
        row.extend([
            r.n.to_string(),
            f(r.mean_fscore),
            f(r.mean_iou),
            f(r.micro_fscore),
            f(r.micro_iou),
        ]);
        rows.push(row);
    }
    write_csv(
        &out.join("summary.csv"),
        &[
            "technique",
            "probability",
            "dataset",
            "folds",
            "mean_fscore",
            "mean_iou",
            "micro_fscore",
            "micro_iou",
        ],
        &rows,
        seed,
    )?;
    write_file(&out.join("summary.txt"), text.as_bytes())?;

    // Baseline fold means keyed by (dataset, fold).
    let baseline: BTreeMap<(String, Option<usize>), (f64, f64)> = table
        .per_fold
        .iter()
        .filter(|r| r.key[0] == args.baseline)
        .map(|r| ((r.key[2].clone(), r.fold), (r.mean_fscore, r.mean_iou)))
        .collect();
    let mut paired = Vec::new();
    for r in table.per_fold.iter().filter(|r| r.key[0] != args.baseline) {
        let Some(fold) = r.fold else { continue };
        if let Some(&(bf, bi)) = baseline.get(&(r.key[2].clone(), Some(fold))) {
            paired.push(vec![
                r.key[0].clone(),
                r.key[1].clone(),
                r.key[2].clone(),
                fold.to_string(),
                f(bf),
                f(r.mean_fscore),
                f(bi),
                f(r.mean_iou),
            ]);
        }
    }
    write_csv(
        &out.join("fold_scores.csv"),
        &[
            "technique",
            "probability",
            "dataset",
            "fold",
            "fscore_baseline",
            "fscore_aug",
            "iou_baseline",
            "iou_aug",
        ],
        &paired,
        seed,
    )?;
    print!("{text}");
    println!("{} paired fold scores against {}", paired.len(), args.baseline);
    Ok(())
}

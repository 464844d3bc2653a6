use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::bail;
use ctaug_core::stats::{significance_table, CellKey, Comparison, PairedScores};

use crate::config::RunConfig;
use crate::exit::Invalid;
use crate::output::{parse_f64, write_csv, write_file, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ModeArg {
    /// Augmented against non-augmented training.
    Baseline,
    /// Unified-pool training against single-dataset training.
    Unified,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Fold scores: technique, probability, dataset, fold, fscore_baseline,
    /// fscore_aug (optional iou_baseline, iou_aug).
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "baseline")]
    mode: ModeArg,
}

impl Args {
    pub fn apply_overrides(&self, cfg: &mut RunConfig) {
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
    }
}

#[derive(Default)]
struct Cell {
    base_f: Vec<f64>,
    aug_f: Vec<f64>,
    base_iou: Vec<f64>,
    aug_iou: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Orders rows by technique, numeric probability, then dataset.
fn row_order(a: &CellKey, b: &CellKey) -> std::cmp::Ordering {
    let p = |k: &CellKey| k.probability.parse::<f64>().unwrap_or(f64::NAN);
    a.technique
        .cmp(&b.technique)
        .then(p(a).total_cmp(&p(b)))
        .then(a.probability.cmp(&b.probability))
        .then(a.dataset.cmp(&b.dataset))
}

fn best_per_dataset(cells: &BTreeMap<CellKey, Cell>, metric: impl Fn(&Cell) -> Option<f64>) -> BTreeMap<String, f64> {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for (k, c) in cells {
        if let Some(v) = metric(c) {
            let e = best.entry(k.dataset.clone()).or_insert(f64::NEG_INFINITY);
            *e = e.max(v);
        }
    }
    best
}

pub fn run(cfg: &RunConfig, args: &Args) -> anyhow::Result<()> {
    let t = Table::read(&args.scores)?;
    let col = |n: &str| t.column(n);
    let (ct, cp, cd, cfo) = (col("technique")?, col("probability")?, col("dataset")?, col("fold")?);
    let (cfb, cfa) = (col("fscore_baseline")?, col("fscore_aug")?);
    let iou_cols = if t.has("iou_baseline") && t.has("iou_aug") {
        Some((col("iou_baseline")?, col("iou_aug")?))
    } else {
        None
    };
    if t.rows.is_empty() {
        bail!(Invalid(format!("{}: no score rows", args.scores.display())));
    }
    let mut cells: BTreeMap<CellKey, Cell> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for row in &t.rows {
        let key = CellKey::new(&row[ct], &row[cp], &row[cd]);
        if !seen.insert((key.clone(), row[cfo].to_string())) {
            bail!(Invalid(format!(
                "duplicate fold {} for {}/{}/{}",
                &row[cfo], key.technique, key.probability, key.dataset
            )));
        }
        let c = cells.entry(key).or_default();
        c.base_f.push(parse_f64(&row[cfb], "fscore_baseline")?);
        c.aug_f.push(parse_f64(&row[cfa], "fscore_aug")?);
        if let Some((ib, ia)) = iou_cols {
            c.base_iou.push(parse_f64(&row[ib], "iou_baseline")?);
            c.aug_iou.push(parse_f64(&row[ia], "iou_aug")?);
        }
    }
    let pairs = cells
        .iter()
        .map(|(k, c)| Ok((k.clone(), PairedScores::new(c.base_f.clone(), c.aug_f.clone())?)))
        .collect::<anyhow::Result<BTreeMap<_, _>>>()?;
    let comparison = match args.mode {
        ModeArg::Baseline => Comparison::Baseline,
        ModeArg::Unified => Comparison::UnifiedVsIndividual,
    };
    let mut results = significance_table(&pairs, cfg.alpha, comparison);
    results.sort_by(|a, b| row_order(&a.key, &b.key));

    let best_f = best_per_dataset(&cells, |c| Some(mean(&c.aug_f)));
    let best_iou = best_per_dataset(&cells, |c| (!c.aug_iou.is_empty()).then(|| mean(&c.aug_iou)));
    let comparison_name = match comparison {
        Comparison::Baseline => "baseline",
        Comparison::UnifiedVsIndividual => "unified_vs_individual",
    };

    let mut rows = Vec::new();
    let mut text = String::new();
    writeln!(
        text,
        "{:<22} {:>6} {:<14} {:>8} {:>8} {:>8} {:>10}  marks",
        "technique", "p", "dataset", "F base", "F aug", "IoU aug", "p-value"
    )?;
    for cell in &results {
        let c = &cells[&cell.key];
        let (fb, fa) = (mean(&c.base_f), mean(&c.aug_f));
        let ia = (!c.aug_iou.is_empty()).then(|| mean(&c.aug_iou));
        let mut marks = String::new();
        if cell.highlighted() {
            marks.push('*');
        }
        if best_f.get(&cell.key.dataset) == Some(&fa) {
            marks.push('^');
        }
        if let (Some(v), Some(b)) = (ia, best_iou.get(&cell.key.dataset)) {
            if v == *b {
                marks.push('~');
            }
        }
        let iou_txt = ia.map_or(String::new(), |v| format!("{v:.4}"));
        let (w, n, p, method, sig, warning) = match &cell.outcome {
            Ok(r) => (
                r.w_plus.to_string(),
                r.n_effective.to_string(),
                format!("{:.6}", r.p_value),
                r.method.to_string(),
                r.reject_null.to_string(),
                String::new(),
            ),
            Err(msg) => {
                eprintln!(
                    "warning: {}/{}/{}: {msg}",
                    cell.key.technique, cell.key.probability, cell.key.dataset
                );
                (String::new(), String::new(), String::new(), String::new(), "false".into(), msg.clone())
            }
        };
        writeln!(
            text,
            "{:<22} {:>6} {:<14} {:>8.4} {:>8.4} {:>8} {:>10}  {}",
            cell.key.technique,
            cell.key.probability,
            cell.key.dataset,
            fb,
            fa,
            iou_txt,
            if p.is_empty() { "n/a" } else { &p },
            marks
        )?;
        rows.push(vec![
            cell.key.technique.clone(),
            cell.key.probability.clone(),
            cell.key.dataset.clone(),
            comparison_name.to_string(),
            c.base_f.len().to_string(),
            format!("{fb:.6}"),
            format!("{fa:.6}"),
            iou_txt,
            w,
            n,
            p,
            method,
            sig,
            marks,
            warning,
        ]);
    }
    writeln!(text, "* p < {} (one-sided Wilcoxon)   ^ best F-score   ~ best IoU", cfg.alpha)?;

    let out = cfg.output_root()?.join("stats");
    write_csv(
        &out.join("significance.csv"),
        &[
            "technique",
            "probability",
            "dataset",
            "comparison",
            "folds",
            "mean_fscore_baseline",
            "mean_fscore_aug",
            "mean_iou_aug",
            "w_plus",
            "n_effective",
            "p_value",
            "method",
            "significant",
            "marks",
            "warning",
        ],
        &rows,
        cfg.master_seed,
    )?;
    write_file(&out.join("table.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

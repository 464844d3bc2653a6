//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the test harness so the lines always print.

// Negated comparisons are deliberate: a NaN must fail a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ctaug_core::compositor::{
    compose, lung_area, CompositeParams, CompositeRecipe, HealthySample, HealthySource, LesionSample,
};
use ctaug_core::datasetprep::balance_factors;
use ctaug_core::metrics::{confusion, fscore, frechet_distance, iou, ConfusionCounts, EmbeddingSet};
use ctaug_core::scheduler::{augment_batch, batch_gate, AugmentationPlan, Batch};
use ctaug_core::stats::{wilcoxon_one_sided, Method, PairedScores, DEFAULT_ALPHA};
use ctaug_core::synthetic::{self, LESION_CLASS};
use ctaug_core::transforms::{apply_transform_traced, neutral_params, RandomCropParams, TransformParams};
use ctaug_core::{
    apply_transform, derive_stream, Category, Error, Mask, RngStream, Sample, TransformKind, TransformSpec,
};
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn random_mask(rng: &mut RngStream, w: usize, h: usize) -> Mask {
    let density = rng.uniform(0.0, 1.0);
    let labels = (0..w * h).map(|_| u8::from(rng.bernoulli(density))).collect();
    Mask::new(w, h, labels).unwrap()
}

fn dice_jaccard() -> Outcome {
    let mut rng = derive_stream(1, "acceptance/dice", 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (a, b) = (random_mask(&mut rng, 64, 64), random_mask(&mut rng, 64, 64));
        let c = confusion(&a, &b).map_err(|e| e.to_string())?;
        let (f, j) = (fscore(&c), iou(&c));
        worst = worst.max((f - 2.0 * j / (1.0 + j)).abs());
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    Ok(format!("1000 pairs, max deviation {worst:e}"))
}

fn metric_spot_values() -> Outcome {
    let c = ConfusionCounts {
        tp: 1,
        fp: 1,
        fn_: 1,
        tn: 0,
    };
    ensure!(fscore(&c) == 0.5, "fscore {}", fscore(&c));
    ensure!(iou(&c) == 1.0 / 3.0, "iou {}", iou(&c));
    let m = Mask::new(4, 1, vec![1, 0, 1, 0]).unwrap();
    let n = Mask::new(4, 1, vec![0, 1, 0, 1]).unwrap();
    let same = confusion(&m, &m).unwrap();
    ensure!(fscore(&same) == 1.0 && iou(&same) == 1.0, "identical masks");
    let disjoint = confusion(&m, &n).unwrap();
    ensure!(fscore(&disjoint) == 0.0 && iou(&disjoint) == 0.0, "disjoint masks");
    let empty = Mask::new(4, 1, vec![0; 4]).unwrap();
    let both_empty = confusion(&empty, &empty).unwrap();
    ensure!(fscore(&both_empty) == 1.0 && iou(&both_empty) == 1.0, "empty/empty");
    Ok("tp=fp=fn=1 -> 0.5, 1/3; identical -> 1; disjoint -> 0".into())
}

fn enumerate_p(d: &[f64]) -> f64 {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut rank = vec![0u32; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32 + 1;
    }
    let obs: u32 = (0..n).filter(|&i| d[i] > 0.0).map(|i| rank[i]).sum();
    let hits = (0u32..1 << n)
        .filter(|s| (0..n).filter(|i| s >> i & 1 == 1).map(|i| rank[i]).sum::<u32>() <= obs)
        .count();
    hits as f64 / (1u64 << n) as f64
}

fn wilcoxon_oracle() -> Outcome {
    let mut rng = derive_stream(2, "acceptance/wilcoxon", 0, 0);
    for case in 0..200 {
        let n = 3 + rng.index(10);
        let mut mags: Vec<u32> = Vec::new();
        while mags.len() < n {
            let m = 1 + rng.index(10_000) as u32;
            if !mags.contains(&m) {
                mags.push(m);
            }
        }
        let d: Vec<f64> = mags
            .iter()
            .map(|&m| if rng.bernoulli(0.5) { -(m as f64) } else { m as f64 } / 1000.0)
            .collect();
        let r = wilcoxon_one_sided(&PairedScores::from_differences(&d).unwrap(), DEFAULT_ALPHA)
            .map_err(|e| e.to_string())?;
        let want = enumerate_p(&d);
        ensure!(r.method == Method::Exact, "case {case}: method {}", r.method);
        ensure!(r.p_value == want, "case {case} {d:?}: p {} vs oracle {want}", r.p_value);
    }
    let d = [-1.0, -2.0, -3.0, -4.0, -5.0];
    let r = wilcoxon_one_sided(&PairedScores::from_differences(&d).unwrap(), DEFAULT_ALPHA).unwrap();
    ensure!(r.p_value == 0.03125, "d=-1..-5: p {}", r.p_value);
    Ok("200 vectors equal enumeration; d=-1..-5 -> 0.03125".into())
}

fn contract_spec(kind: TransformKind) -> TransformSpec {
    match kind {
        TransformKind::RandomCrop => {
            TransformSpec::new(TransformParams::RandomCrop(RandomCropParams { width: 48, height: 40 })).unwrap()
        }
        k => TransformSpec::default_for(k),
    }
}

fn fixture_sample(seed: u64, w: usize, h: usize) -> Sample {
    let (image, mask) = synthetic::slice(w, h, 2, &mut derive_stream(seed, "acceptance/sample", 0, 0));
    Sample::new(image, mask, "syn", format!("s{seed}")).unwrap()
}

fn category_contract() -> Outcome {
    let (mut pixel, mut spatial) = (0, 0);
    for kind in TransformKind::ALL {
        let spec = contract_spec(kind);
        for seed in 0..50u64 {
            let s = fixture_sample(seed, 64, 56);
            let out = apply_transform_traced(&s, &spec, &mut derive_stream(seed, "aug", 0, 0))
                .map_err(|e| format!("{kind}: {e}"))?;
            match kind.category() {
                Category::Pixel => {
                    ensure!(out.sample.mask == s.mask, "{kind} seed {seed}: mask changed");
                    pixel += 1;
                }
                Category::Spatial => {
                    ensure!(
                        out.sample.mask.label_set().is_subset(&s.mask.label_set()),
                        "{kind} seed {seed}: new labels"
                    );
                    let map = out.map.as_ref().ok_or(format!("{kind}: no geometric map"))?;
                    ensure!(
                        map.warp_mask(&s.mask).map_err(|e| e.to_string())? == out.sample.mask,
                        "{kind} seed {seed}: re-warp differs"
                    );
                    spatial += 1;
                }
            }
        }
    }
    Ok(format!("{pixel} pixel and {spatial} spatial applications"))
}

fn identity_parameters() -> Outcome {
    let mut checked = Vec::new();
    let mut skipped = Vec::new();
    for kind in TransformKind::ALL {
        let Some(params) = neutral_params(kind, 40, 36) else {
            skipped.push(kind.to_string());
            continue;
        };
        let spec = TransformSpec::new(params).map_err(|e| e.to_string())?;
        for seed in 0..10u64 {
            let s = fixture_sample(seed, 40, 36);
            let out = apply_transform(&s, &spec, &mut derive_stream(seed, "aug", 0, 0)).map_err(|e| e.to_string())?;
            ensure!(out == s, "{kind} seed {seed}: not identity");
        }
        checked.push(kind.to_string());
    }
    Ok(format!(
        "{} kinds exact; no zero-parameter draw for {}",
        checked.len(),
        skipped.join(", ")
    ))
}

fn scheduler_gate() -> Outcome {
    let samples = synthetic::dataset("syn", 4, 32, 24, 0, &mut derive_stream(3, "acceptance/gate", 0, 0)).unwrap();
    let plan = |kind, p| AugmentationPlan::new(TransformSpec::default_for(kind), p).unwrap();
    for bi in 0..100 {
        let b = Batch::new(samples.clone(), 0, bi).unwrap();
        let out = augment_batch(&b, &plan(TransformKind::Rotate, 0.0), 9).map_err(|e| e.to_string())?;
        ensure!(out == b, "p=0 changed batch {bi}");
        ensure!(batch_gate(1.0, 9, 0, bi), "p=1 skipped batch {bi}");
        let out = augment_batch(&b, &plan(TransformKind::Posterize, 1.0), 9).map_err(|e| e.to_string())?;
        ensure!(
            out.samples().iter().zip(b.samples()).all(|(o, i)| o.image != i.image),
            "p=1 left an image untouched in batch {bi}"
        );
    }
    let fired = (0..10_000).filter(|&bi| batch_gate(0.3, 9, 0, bi)).count();
    let rate = fired as f64 / 10_000.0;
    ensure!((rate - 0.3).abs() <= 0.02, "rate {rate}");
    Ok(format!("p=0 identity, p=1 always, p=0.3 rate {rate:.4}"))
}

fn recipe(seed: u64) -> (HealthySample, LesionSample) {
    const W: usize = 48;
    const H: usize = 40;
    let mut rng = derive_stream(seed, "acceptance/recipe", 0, 0);
    let split = |m: &Mask| {
        let lung = m.labels().iter().map(|&v| u8::from(v != 0)).collect();
        let lesion = m.labels().iter().map(|&v| u8::from(v == LESION_CLASS)).collect();
        (Mask::new(W, H, lung).unwrap(), Mask::new(W, H, lesion).unwrap())
    };
    let (hi, hm) = synthetic::slice(W, H, 0, &mut rng);
    let (li, lm) = synthetic::slice(W, H, 1 + rng.index(3), &mut rng);
    let (hl, _) = split(&hm);
    let (ll, les) = split(&lm);
    (
        HealthySample::new("h", hi, hl, HealthySource::Other).unwrap(),
        LesionSample::new("l", li, les, ll).unwrap(),
    )
}

fn compositor() -> Outcome {
    let mut accepted = 0;
    let mut rejected = 0;
    for seed in 0..500u64 {
        let (h, l) = recipe(seed);
        let params = CompositeParams::default();
        let r = CompositeRecipe {
            healthy: &h,
            lesion: &l,
            params,
        };
        let ratio = lung_area(&l.lung_mask) as f64 / lung_area(&h.lung_mask) as f64;
        match compose(&r) {
            Ok(c) => {
                ensure!((0.9..=1.1).contains(&ratio), "seed {seed}: accepted ratio {ratio}");
                let outside = c
                    .sample
                    .mask
                    .labels()
                    .iter()
                    .zip(h.lung_mask.labels())
                    .filter(|(&m, &lung)| m != 0 && lung == 0)
                    .count();
                ensure!(outside == 0, "seed {seed}: {outside} lesion pixels outside the lung");
                let flipped = compose(&CompositeRecipe {
                    params: CompositeParams {
                        flip_lesion: true,
                        ..params
                    },
                    ..r
                })
                .map_err(|e| format!("seed {seed}: flip: {e}"));
                let mirrored_lesion = l.hflip();
                let mirrored = compose(&CompositeRecipe {
                    lesion: &mirrored_lesion,
                    ..r
                })
                .map_err(|e| format!("seed {seed}: mirrored: {e}"));
                match (flipped, mirrored) {
                    (Ok(a), Ok(b)) => ensure!(
                        a.sample.image == b.sample.image && a.sample.mask == b.sample.mask,
                        "seed {seed}: flip equivalence"
                    ),
                    (Err(_), Err(_)) => {}
                    (a, b) => return Err(format!("seed {seed}: flip outcomes differ: {:?} vs {:?}", a.err(), b.err())),
                }
                accepted += 1;
            }
            Err(Error::SizeConstraint { .. }) => {
                ensure!(!(0.9..=1.1).contains(&ratio), "seed {seed}: rejected ratio {ratio}");
                rejected += 1;
            }
            Err(Error::DegenerateComposite) => rejected += 1,
            Err(e) => return Err(format!("seed {seed}: {e}")),
        }
    }
    ensure!(accepted > 0, "no recipe accepted");
    Ok(format!("{accepted} of 500 accepted, {rejected} rejected, all audits clean"))
}

fn balancing() -> Outcome {
    let sizes = BTreeMap::from([("a".to_string(), 9166), ("b".to_string(), 472)]);
    let r = balance_factors(&sizes).map_err(|e| e.to_string())?;
    ensure!(r.factor("a") == Some(1) && r.factor("b") == Some(20), "factors {:?}", r.entries);
    let b = r.entries.iter().find(|e| e.dataset_id == "b").unwrap();
    ensure!(b.replicated_size == 9440, "replicated {}", b.replicated_size);
    let mut rng = derive_stream(4, "acceptance/balance", 0, 0);
    for case in 0..1000 {
        let k = 2 + rng.index(6);
        let sizes: BTreeMap<String, usize> = (0..k).map(|i| (format!("d{i}"), 1 + rng.index(20_000))).collect();
        let max = *sizes.values().max().unwrap();
        let r = balance_factors(&sizes).map_err(|e| e.to_string())?;
        for e in &r.entries {
            ensure!(
                e.factor >= 1 && e.factor * e.size >= max && (e.factor - 1) * e.size < max,
                "case {case}: {} size {} factor {} (max {max})",
                e.dataset_id,
                e.size,
                e.factor
            );
        }
    }
    Ok("{9166, 472} -> {1, 20}, 9440; 1000 random vectors minimal".into())
}

/// Two points at `mean +- std/sqrt(2)`: unbiased variance is exactly `std^2`.
fn gaussian_1d(mean: f64, std: f64) -> EmbeddingSet {
    let h = std / 2f64.sqrt();
    EmbeddingSet::new(2, 1, vec![mean - h, mean + h]).unwrap()
}

fn frechet() -> Outcome {
    let mut rng = derive_stream(5, "acceptance/frechet", 0, 0);
    let data: Vec<f64> = (0..50 * 8).map(|_| rng.normal(0.0, 1.0)).collect();
    let a = EmbeddingSet::new(50, 8, data).unwrap();
    let self_d = frechet_distance(&a, &a).map_err(|e| e.to_string())?;
    ensure!(self_d.abs() <= 1e-8, "d(a,a) = {self_d:e}");
    let d1 = frechet_distance(&gaussian_1d(0.0, 1.0), &gaussian_1d(1.0, 1.0)).unwrap();
    let d2 = frechet_distance(&gaussian_1d(0.0, 1.0), &gaussian_1d(0.0, 3.0)).unwrap();
    ensure!((d1 - 1.0).abs() <= 1e-6, "(0,1) vs (1,1): {d1}");
    ensure!((d2 - 4.0).abs() <= 1e-6, "(0,1) vs (0,3): {d2}");
    Ok(format!("d(a,a) = {self_d:.1e}; 1-D cases {d1:.9}, {d2:.9}"))
}

fn ctaug(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ctaug"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "ctaug {}: exit {:?}\n{}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn tree_hash(root: &Path) -> String {
    fn walk(dir: &Path, files: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, files);
            } else {
                files.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(root, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&f).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn pipeline(work: &Path, jobs: &str) -> Result<(), String> {
    let run = |args: &[&str]| -> Result<String, String> {
        let mut full = vec!["--jobs", jobs, "--seed", "11", "--data-root", "data", "--out"];
        full.extend_from_slice(args);
        ctaug(&full, work)
    };
    ctaug(
        &[
            "--jobs", jobs, "--seed", "11", "--out", "data", "fixture", "--datasets", "alpha:40,beta:20",
            "--predictions", "none:0.03,flip:0.02",
        ],
        work,
    )?;
    run(&["out", "prepare"])?;
    run(&[
        "out",
        "augment",
        "--manifest",
        "out/manifests/unified_train.jsonl",
        "--mode",
        "online-preview",
        "--plan",
        "plan.json",
    ])?;
    run(&["out", "augment", "--manifest", "out/manifests/alpha.jsonl", "--mode", "offline", "--plan", "plan.json"])?;
    run(&["out", "compose", "--manifest", "out/manifests/alpha.jsonl", "--healthy-dir", "data/healthy"])?;
    for (tech, ds) in [("none", "alpha"), ("flip", "alpha"), ("none", "beta"), ("flip", "beta")] {
        let manifest = format!("out/manifests/{ds}.jsonl");
        let preds = format!("data/predictions/{tech}");
        let tag = format!("{tech}-{ds}");
        run(&[
            "out", "eval", "--manifest", &manifest, "--pred-root", &preds, "--technique", tech, "--split", "train",
            "--tag", &tag,
        ])?;
    }
    let records: Vec<String> = ["none-alpha", "flip-alpha", "none-beta", "flip-beta"]
        .iter()
        .map(|t| format!("out/eval/{t}/per_image.csv"))
        .collect();
    let mut report = vec!["out", "report", "--records"];
    report.extend(records.iter().map(String::as_str));
    run(&report)?;
    run(&["out", "stats", "--scores", "out/report/fold_scores.csv"])?;
    Ok(())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let work = tmp.path();
    std::fs::write(
        work.join("plan.json"),
        r#"[{"kind":"Rotate","probability":0.5},{"kind":"ElasticTransform","probability":0.5},{"kind":"CLAHE","probability":0.3}]"#,
    )
    .map_err(|e| e.to_string())?;
    let mut hashes = Vec::new();
    for jobs in ["1", "8"] {
        for d in ["data", "out"] {
            let _ = std::fs::remove_dir_all(work.join(d));
        }
        pipeline(work, jobs)?;
        hashes.push((tree_hash(&work.join("data")), tree_hash(&work.join("out"))));
    }
    ensure!(hashes[0] == hashes[1], "trees differ: {hashes:?}");
    Ok(format!("jobs 1 and 8 give out-tree {}", &hashes[0].1[..16]))
}

const REAL_REMOVALS: [(&str, usize); 5] =
    [("CC-CCII", 201), ("MedSeg", 457), ("MosMed", 1264), ("Zenodo", 1676), ("Ricord1a", 0)];

/// `None` when the real datasets are not mounted.
fn real_removals() -> Option<Outcome> {
    let root = PathBuf::from(std::env::var_os("CTAUG_REAL_DATA")?);
    Some((|| {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = tmp.path().to_string_lossy().into_owned();
        let ids: Vec<&str> = REAL_REMOVALS.iter().map(|(id, _)| *id).collect();
        let root_s = root.to_string_lossy().into_owned();
        ctaug(
            &["--data-root", &root_s, "--out", &out, "prepare", "--datasets", &ids.join(","), "--no-unify"],
            tmp.path(),
        )?;
        let text = std::fs::read_to_string(tmp.path().join("removal_report.csv")).map_err(|e| e.to_string())?;
        let got: BTreeMap<String, usize> = text
            .lines()
            .skip(1)
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[2].parse().unwrap_or(usize::MAX))
            })
            .collect();
        for (id, want) in REAL_REMOVALS {
            ensure!(got.get(id) == Some(&want), "{id}: removed {:?}, expected {want}", got.get(id));
        }
        Ok("all five removal counts match".to_string())
    })())
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("dice-jaccard identity", dice_jaccard),
        ("metric spot values", metric_spot_values),
        ("wilcoxon oracle equivalence", wilcoxon_oracle),
        ("transform category contract", category_contract),
        ("identity parameters", identity_parameters),
        ("scheduler gate", scheduler_gate),
        ("compositor containment and size rule", compositor),
        ("balancing", balancing),
        ("frechet distance", frechet),
        ("determinism", determinism),
    ];
    let start = Instant::now();
    let mut failed = 0;
    let report = |name: &str, outcome: Outcome, took: Duration| match outcome {
        Ok(detail) => println!("PASS  {name}: {detail} ({:.2}s)", took.as_secs_f64()),
        Err(why) => println!("FAIL  {name}: {why} ({:.2}s)", took.as_secs_f64()),
    };
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        failed += usize::from(outcome.is_err());
        report(name, outcome, t.elapsed());
    }
    let t = Instant::now();
    match real_removals() {
        None => println!("SKIP  real-data removal counts: CTAUG_REAL_DATA not set"),
        Some(outcome) => {
            failed += usize::from(outcome.is_err());
            report("real-data removal counts", outcome, t.elapsed());
        }
    }
    println!("acceptance: {failed} failed, total {:.1}s", start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

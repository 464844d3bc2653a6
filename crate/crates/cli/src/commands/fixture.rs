use anyhow::{bail, Context};
use ctaug_core::datasetprep::LabelMap;
use ctaug_core::io::save_raster;
use ctaug_core::synthetic::{self, LESION_CLASS};
use ctaug_core::{derive_stream, Mask, Raster};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::exit::Invalid;
use crate::output::write_file;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `id:count` pairs.
    #[arg(long, value_delimiter = ',', default_value = "alpha:40,beta:20")]
    datasets: Vec<String>,
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Healthy slices written to `healthy/{images,lungs}`.
    #[arg(long, default_value_t = 20)]
    healthy: usize,
    /// Every n-th slice has no lesion (0 = none empty).
    #[arg(long, default_value_t = 5)]
    empty_every: usize,
    /// Also write noisy predictions under `predictions/<name>/<dataset>/`,
    /// one set per name, with the given pixel flip rate.
    #[arg(long, value_delimiter = ',')]
    predictions: Vec<String>,
}

fn parse_pair(s: &str, what: &str) -> anyhow::Result<(String, String)> {
    s.split_once(':')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| Invalid(format!("{what}: expected name:value, got {s:?}")).into())
}

fn write_label_map(path: &std::path::Path, map: &LabelMap) -> anyhow::Result<()> {
    write_file(path, serde_json::to_string_pretty(map)?.as_bytes())
}

pub fn run(cfg: &RunConfig, args: &Args) -> anyhow::Result<()> {
    let out = cfg.output_root()?;
    let seed = cfg.master_seed;
    if args.size < 16 {
        bail!(Invalid(format!("--size must be at least 16, got {}", args.size)));
    }
    let mut datasets = Vec::new();
    for spec in &args.datasets {
        let (id, n) = parse_pair(spec, "--datasets")?;
        let n: usize = n.parse().map_err(|_| Invalid(format!("--datasets: bad count in {spec:?}")))?;
        datasets.push((id, n));
    }
    let mut predictions = Vec::new();
    for spec in &args.predictions {
        let (name, rate) = parse_pair(spec, "--predictions")?;
        let rate: f64 = rate.parse().map_err(|_| Invalid(format!("--predictions: bad rate in {spec:?}")))?;
        if !(0.0..=1.0).contains(&rate) {
            bail!(Invalid(format!("--predictions: rate must be in [0, 1], got {rate}")));
        }
        predictions.push((name, rate));
    }

    for (id, n) in &datasets {
        let map = synthetic::label_map(id);
        let samples = synthetic::dataset(
            id,
            *n,
            args.size,
            args.size,
            args.empty_every,
            &mut derive_stream(seed, &format!("fixture/{id}"), 0, 0),
        )?;
        let dir = out.join(id);
        write_label_map(&dir.join("label_map.json"), &map)?;
        samples.par_iter().enumerate().try_for_each(|(i, s)| -> anyhow::Result<()> {
            let name = format!("{}.png", s.sample_id);
            save_raster(&s.image, &dir.join("images").join(&name))?;
            save_raster(&map.encode_raw(&s.mask)?, &dir.join("masks").join(&name))?;
            for (pname, rate) in &predictions {
                let mut rng = derive_stream(seed, &format!("fixture-pred/{pname}/{id}"), 0, i as u64);
                let labels = s
                    .mask
                    .labels()
                    .iter()
                    .map(|&c| u8::from(c == LESION_CLASS) ^ u8::from(rng.bernoulli(*rate)))
                    .map(|v| v * 255)
                    .collect();
                let pred = Mask::new(s.mask.width(), s.mask.height(), labels)?;
                save_raster(&pred, &out.join("predictions").join(pname).join(id).join(&name))?;
            }
            Ok(())
        })?;
        println!("{id}: {n} slices");
    }

    if args.healthy > 0 {
        let dir = out.join("healthy");
        (0..args.healthy).into_par_iter().try_for_each(|i| -> anyhow::Result<()> {
            let mut rng = derive_stream(seed, "fixture/healthy", 0, i as u64);
            let (image, mask) = synthetic::slice(args.size, args.size, 0, &mut rng);
            let lungs: Vec<u8> = mask.labels().iter().map(|&c| if c != 0 { 255 } else { 0 }).collect();
            let lungs = Mask::new(mask.width(), mask.height(), lungs)?;
            let name = format!("healthy_{i:04}.png");
            save_raster(&image, &dir.join("images").join(&name))?;
            save_raster(&lungs, &dir.join("lungs").join(&name)).context("writing lung mask")
        })?;
        println!("healthy: {} slices", args.healthy);
    }
    Ok(())
}

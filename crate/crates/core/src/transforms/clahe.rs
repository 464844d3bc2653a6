//! Contrast-limited adaptive histogram equalisation.
//!
//! Follows the usual tile scheme: the image is padded (reflect-101) to a
//! multiple of the tile grid, every tile gets a clipped-histogram lookup
//! table, and each output pixel bilinearly interpolates the tables of the
//! four nearest tile centres.

use crate::error::{Error, Result};
use crate::raster::{Image, Raster};

use super::filters::reflect101;

const BINS: usize = 256;

pub fn clahe(image: &Image, clip_limit: f64, tile_grid: (usize, usize)) -> Result<Image> {
    let (rows, cols) = tile_grid;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidSpec(format!(
            "degenerate tile grid {rows}x{cols}"
        )));
    }
    if !(clip_limit.is_finite() && clip_limit >= 1.0) {
        return Err(Error::InvalidSpec(format!("clip_limit must be >= 1, got {clip_limit}")));
    }
    let (w, h) = image.dims();
    let tile_w = w.div_ceil(cols);
    let tile_h = h.div_ceil(rows);
    let tile_area = tile_w * tile_h;
    let clip = ((clip_limit * tile_area as f64 / BINS as f64) as usize).max(1);
    let lut_scale = (BINS - 1) as f64 / tile_area as f64;

    let mut luts = vec![[0u8; BINS]; rows * cols];
    for ty in 0..rows {
        for tx in 0..cols {
            let mut hist = [0usize; BINS];
            for y in ty * tile_h..(ty + 1) * tile_h {
                let yy = reflect101(y as i64, h);
                for x in tx * tile_w..(tx + 1) * tile_w {
                    hist[image.get(reflect101(x as i64, w), yy) as usize] += 1;
                }
            }
            clip_histogram(&mut hist, clip);
            let lut = &mut luts[ty * cols + tx];
            let mut sum = 0usize;
            for (v, &count) in hist.iter().enumerate() {
                sum += count;
                lut[v] = (sum as f64 * lut_scale).round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    let inv_tw = 1.0 / tile_w as f64;
    let inv_th = 1.0 / tile_h as f64;
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let tyf = y as f64 * inv_th - 0.5;
        let ty1 = tyf.floor() as i64;
        let ya = tyf - ty1 as f64;
        let ty2 = ((ty1 + 1) as usize).min(rows - 1);
        let ty1 = ty1.max(0) as usize;
        for x in 0..w {
            let txf = x as f64 * inv_tw - 0.5;
            let tx1 = txf.floor() as i64;
            let xa = txf - tx1 as f64;
            let tx2 = ((tx1 + 1) as usize).min(cols - 1);
            let tx1 = tx1.max(0) as usize;
            let v = image.get(x, y) as usize;
            let l = |r: usize, c: usize| f64::from(luts[r * cols + c][v]);
            let res = (l(ty1, tx1) * (1.0 - xa) + l(ty1, tx2) * xa) * (1.0 - ya)
                + (l(ty2, tx1) * (1.0 - xa) + l(ty2, tx2) * xa) * ya;
            out[y * w + x] = res.round().clamp(0.0, 255.0) as u8;
        }
    }
    Image::new(w, h, out)
}

/// Clips every bin at `clip` and spreads the excess: an equal share to all
/// bins, then one extra count to evenly strided bins for the remainder.
fn clip_histogram(hist: &mut [usize; BINS], clip: usize) {
    let mut excess = 0usize;
    for c in hist.iter_mut() {
        if *c > clip {
            excess += *c - clip;
            *c = clip;
        }
    }
    let batch = excess / BINS;
    let mut residual = excess - batch * BINS;
    for c in hist.iter_mut() {
        *c += batch;
    }
    if residual > 0 {
        let step = (BINS / residual).max(1);
        let mut i = 0;
        while i < BINS && residual > 0 {
            hist[i] += 1;
            residual -= 1;
            i += step;
        }
    }
}

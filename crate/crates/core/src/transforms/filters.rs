//! Convolution and rank filters on 8-bit images.

use crate::error::{Error, Result};
use crate::raster::{Image, Raster};

/// Reflect-101 border index (`gfedcb|abcdefgh|gfedcba`).
#[inline]
pub(crate) fn reflect101(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let mut r = i.rem_euclid(period);
    if r >= n {
        r = period - r;
    }
    r as usize
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Normalised Gaussian weights with radius `ceil(4 sigma)`.
pub(crate) fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    gaussian_weights(radius, sigma)
}

fn gaussian_weights(radius: i64, sigma: f64) -> Vec<f64> {
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / denom).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Sigma implied by an odd kernel size when none is given explicitly.
pub fn sigma_for_kernel(ksize: usize) -> f64 {
    0.3 * ((ksize as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

fn check_odd(ksize: usize) -> Result<()> {
    if ksize == 0 || ksize.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!("kernel size must be odd, got {ksize}")));
    }
    Ok(())
}

/// Gaussian blur with an odd `ksize` (1 is the identity), reflect-101 border.
pub fn gaussian_blur(image: &Image, ksize: usize) -> Result<Image> {
    check_odd(ksize)?;
    if ksize == 1 {
        return Ok(image.clone());
    }
    let kernel = gaussian_weights((ksize / 2) as i64, sigma_for_kernel(ksize));
    Ok(separable(image, &kernel))
}

fn separable(image: &Image, kernel: &[f64]) -> Image {
    let (w, h) = image.dims();
    let r = (kernel.len() / 2) as i64;
    let src = image.pixels();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &g)| g * f64::from(row[reflect101(x as i64 + k as i64 - r, w)]))
                .sum();
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let acc: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, &g)| g * tmp[reflect101(y as i64 + k as i64 - r, h) * w + x])
                .sum();
            out[y * w + x] = to_u8(acc);
        }
    }
    Image::new(w, h, out).expect("same dims")
}

/// 3x3 correlation with reflect-101 border, rounded and saturated.
pub fn convolve3x3(image: &Image, kernel: &[[f64; 3]; 3]) -> Image {
    let (w, h) = image.dims();
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ky, krow) in kernel.iter().enumerate() {
                let yy = reflect101(y as i64 + ky as i64 - 1, h);
                for (kx, &kv) in krow.iter().enumerate() {
                    if kv != 0.0 {
                        let xx = reflect101(x as i64 + kx as i64 - 1, w);
                        acc += kv * f64::from(image.get(xx, yy));
                    }
                }
            }
            out[y * w + x] = to_u8(acc);
        }
    }
    Image::new(w, h, out).expect("same dims")
}

/// Median over a `ksize x ksize` window with replicated borders.
pub fn median_blur(image: &Image, ksize: usize) -> Result<Image> {
    check_odd(ksize)?;
    if ksize == 1 {
        return Ok(image.clone());
    }
    let (w, h) = image.dims();
    let r = (ksize / 2) as i64;
    let mut window = Vec::with_capacity(ksize * ksize);
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            window.clear();
            for dy in -r..=r {
                let yy = clamp_index(y as i64 + dy, h);
                for dx in -r..=r {
                    window.push(image.get(clamp_index(x as i64 + dx, w), yy));
                }
            }
            let mid = window.len() / 2;
            out[y * w + x] = *window.select_nth_unstable(mid).1;
        }
    }
    Ok(Image::new(w, h, out).expect("same dims"))
}

pub(crate) const IDENTITY_3X3: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];

pub(crate) fn blend_kernels(effect: &[[f64; 3]; 3], alpha: f64) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for y in 0..3 {
        for x in 0..3 {
            k[y][x] = (1.0 - alpha) * IDENTITY_3X3[y][x] + alpha * effect[y][x];
        }
    }
    k
}

/// Emboss kernel blended with the identity by `alpha`.
pub fn emboss(image: &Image, alpha: f64, strength: f64) -> Image {
    let s = strength;
    let effect = [[-1.0 - s, -s, 0.0], [-s, 1.0, s], [0.0, s, 1.0 + s]];
    convolve3x3(image, &blend_kernels(&effect, alpha))
}

/// Sharpening kernel blended with the identity by `alpha`.
pub fn sharpen(image: &Image, alpha: f64, lightness: f64) -> Image {
    let effect = [
        [-1.0, -1.0, -1.0],
        [-1.0, 8.0 + lightness, -1.0],
        [-1.0, -1.0, -1.0],
    ];
    convolve3x3(image, &blend_kernels(&effect, alpha))
}

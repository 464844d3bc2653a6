//! Dense inverse-coordinate warps shared by image and mask.
//!
//! A [`GeometricMap`] stores, for every output pixel, the source coordinate
//! it samples from (pixel-index convention, `(0, 0)` is the centre of the
//! top-left pixel). Images are resampled bilinearly, masks by nearest
//! neighbour; samples outside the source read as 0.

use crate::error::{Error, Result};
use crate::raster::{Image, Mask, Raster};
use crate::rng::RngStream;

use super::filters::gaussian_kernel_1d;

/// Coordinates this close to an integer are snapped onto it, so analytic
/// identity maps (angle 0, scale 1, ...) resample exactly.
const SNAP_EPS: f64 = 1e-9;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_EPS {
        r
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMap {
    width: usize,
    height: usize,
    coords: Vec<(f64, f64)>,
}

impl GeometricMap {
    /// Builds a map from a function of the output pixel position.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> Result<Self> {
        let mut coords = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = f(x as f64, y as f64);
                if !sx.is_finite() || !sy.is_finite() {
                    return Err(Error::NonFinite(format!("map coordinate at ({x}, {y})")));
                }
                coords.push((snap(sx), snap(sy)));
            }
        }
        Ok(Self {
            width,
            height,
            coords,
        })
    }

    pub fn identity(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |x, y| (x, y)).expect("finite")
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn source(&self, x: usize, y: usize) -> (f64, f64) {
        self.coords[y * self.width + x]
    }

    pub fn is_identity(&self) -> bool {
        self.coords.iter().enumerate().all(|(i, &(sx, sy))| {
            sx == (i % self.width) as f64 && sy == (i / self.width) as f64
        })
    }

    fn check<R: Raster>(&self, r: &R) -> Result<()> {
        if r.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                left: r.dims(),
                right: self.dims(),
            });
        }
        Ok(())
    }

    pub fn warp_image(&self, image: &Image) -> Result<Image> {
        self.check(image)?;
        let out = self
            .coords
            .iter()
            .map(|&(sx, sy)| bilinear(image, sx, sy))
            .collect();
        Image::new(self.width, self.height, out)
    }

    pub fn warp_mask(&self, mask: &Mask) -> Result<Mask> {
        self.check(mask)?;
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let out = self
            .coords
            .iter()
            .map(|&(sx, sy)| {
                let xi = (sx + 0.5).floor() as i64;
                let yi = (sy + 0.5).floor() as i64;
                if xi < 0 || yi < 0 || xi >= w || yi >= h {
                    0
                } else {
                    mask.get(xi as usize, yi as usize)
                }
            })
            .collect();
        Mask::new(self.width, self.height, out)
    }
}

#[inline]
fn bilinear(image: &Image, sx: f64, sy: f64) -> u8 {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            f64::from(image.get(x as usize, y as usize))
        }
    };
    let v = if fx == 0.0 && fy == 0.0 {
        at(x0, y0)
    } else {
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
        let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    };
    v.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    Horizontal,
    Vertical,
    Both,
}

pub fn flip_map(width: usize, height: usize, axis: FlipAxis) -> GeometricMap {
    let (wm, hm) = ((width - 1) as f64, (height - 1) as f64);
    GeometricMap::from_fn(width, height, |x, y| match axis {
        FlipAxis::Horizontal => (wm - x, y),
        FlipAxis::Vertical => (x, hm - y),
        FlipAxis::Both => (wm - x, hm - y),
    })
    .expect("finite")
}

/// Affine warp about the image centre: the content is scaled by `scale`,
/// rotated clockwise (on screen, y pointing down) by `angle_deg`, then
/// translated by `(shift_x * width, shift_y * height)` pixels.
pub fn affine_map(
    width: usize,
    height: usize,
    shift_x: f64,
    shift_y: f64,
    scale: f64,
    angle_deg: f64,
) -> Result<GeometricMap> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidSpec(format!("scale must be positive, got {scale}")));
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let tx = shift_x * width as f64;
    let ty = shift_y * height as f64;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    GeometricMap::from_fn(width, height, |x, y| {
        let dx = x - cx - tx;
        let dy = y - cy - ty;
        let rx = cos * dx + sin * dy;
        let ry = -sin * dx + cos * dy;
        (cx + rx / scale, cy + ry / scale)
    })
}

pub fn rotate_map(width: usize, height: usize, angle_deg: f64) -> Result<GeometricMap> {
    affine_map(width, height, 0.0, 0.0, 1.0, angle_deg)
}

/// Crops a `crop_w x crop_h` window at `(x0, y0)` and rescales it to the full size.
pub fn crop_rescale_map(
    width: usize,
    height: usize,
    x0: usize,
    y0: usize,
    crop_w: usize,
    crop_h: usize,
) -> Result<GeometricMap> {
    if crop_w == 0 || crop_h == 0 || x0 + crop_w > width || y0 + crop_h > height {
        return Err(Error::InvalidSpec(format!(
            "crop window {crop_w}x{crop_h}@({x0},{y0}) outside {width}x{height}"
        )));
    }
    let kx = crop_w as f64 / width as f64;
    let ky = crop_h as f64 / height as f64;
    GeometricMap::from_fn(width, height, |x, y| {
        (
            x0 as f64 + (x + 0.5) * kx - 0.5,
            y0 as f64 + (y + 0.5) * ky - 0.5,
        )
    })
}

/// Separable Gaussian smoothing of a dense field with zero padding.
pub(crate) fn smooth_field(field: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel_1d(sigma);
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (width as i64, height as i64);
    let mut tmp = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                let xx = x + k as i64 - r;
                if (0..w).contains(&xx) {
                    acc += g * field[(y * w + xx) as usize];
                }
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                let yy = y + k as i64 - r;
                if (0..h).contains(&yy) {
                    acc += g * tmp[(yy * w + x) as usize];
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Random elastic displacement map.
///
/// Draws `width * height` values from U(-1, 1) for the x displacement and
/// then as many for y (row-major), smooths each field with a Gaussian of
/// standard deviation `sigma` (zero padding, radius `ceil(4 sigma)`) and
/// scales by `alpha`. Output pixel `p` samples the source at `p + d(p)`.
pub fn elastic_map(
    width: usize,
    height: usize,
    alpha: f64,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<GeometricMap> {
    if !alpha.is_finite() || !sigma.is_finite() {
        return Err(Error::NonFinite("elastic alpha/sigma".into()));
    }
    if alpha < 0.0 || sigma <= 0.0 {
        return Err(Error::InvalidSpec(format!(
            "elastic requires alpha >= 0 and sigma > 0, got alpha={alpha}, sigma={sigma}"
        )));
    }
    let n = width * height;
    let raw_x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let raw_y: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let dx = smooth_field(&raw_x, width, height, sigma);
    let dy = smooth_field(&raw_y, width, height, sigma);
    let mut coords = Vec::with_capacity(n);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            coords.push((
                snap(x as f64 + alpha * dx[i]),
                snap(y as f64 + alpha * dy[i]),
            ));
        }
    }
    Ok(GeometricMap {
        width,
        height,
        coords,
    })
}

/// Piecewise-linear 1-D remap for grid distortion: `len` is split into
/// `steps.len()` equal output cells; cell `i` reads a source span
/// proportional to `1 + steps[i]`, normalised so the spans tile `[0, len]`.
fn grid_axis(len: usize, steps: &[f64]) -> Vec<f64> {
    let n = steps.len();
    let total: f64 = steps.iter().map(|d| 1.0 + d).sum();
    let mut src_bounds = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    src_bounds.push(0.0);
    for d in steps {
        acc += 1.0 + d;
        src_bounds.push(acc / total * len as f64);
    }
    let cell = len as f64 / n as f64;
    (0..len)
        .map(|x| {
            let x = x as f64;
            let i = ((x / cell).floor() as usize).min(n - 1);
            let o0 = i as f64 * cell;
            let span = src_bounds[i + 1] - src_bounds[i];
            src_bounds[i] + (x - o0) * span / cell
        })
        .collect()
}

pub fn grid_distortion_map(
    width: usize,
    height: usize,
    x_steps: &[f64],
    y_steps: &[f64],
) -> Result<GeometricMap> {
    if x_steps.is_empty() || y_steps.is_empty() {
        return Err(Error::InvalidSpec("grid distortion needs at least one step".into()));
    }
    if x_steps.iter().chain(y_steps).any(|d| !(d.is_finite() && *d > -1.0)) {
        return Err(Error::InvalidSpec("grid distortion steps must be > -1".into()));
    }
    let xs = grid_axis(width, x_steps);
    let ys = grid_axis(height, y_steps);
    GeometricMap::from_fn(width, height, |x, y| (xs[x as usize], ys[y as usize]))
}

/// Radial lens distortion about a (shifted) centre with focal lengths equal
/// to the image sides: `src = c + (p - c) * (1 + k r^2 + k r^4)`.
pub fn optical_distortion_map(
    width: usize,
    height: usize,
    k: f64,
    center_dx: f64,
    center_dy: f64,
) -> Result<GeometricMap> {
    let fx = width as f64;
    let fy = height as f64;
    let cx = fx * 0.5 + center_dx;
    let cy = fy * 0.5 + center_dy;
    GeometricMap::from_fn(width, height, |x, y| {
        let u = (x - cx) / fx;
        let v = (y - cy) / fy;
        let r2 = u * u + v * v;
        let factor = 1.0 + k * r2 + k * r2 * r2;
        (cx + u * factor * fx, cy + v * factor * fy)
    })
}

/// Displacements on a `rows x cols` control lattice spanning the image,
/// interpolated affinely inside the two triangles of every lattice cell.
/// `disp` is row-major over lattice points, `(dx, dy)` in pixels.
pub fn piecewise_affine_map(
    width: usize,
    height: usize,
    rows: usize,
    cols: usize,
    disp: &[(f64, f64)],
) -> Result<GeometricMap> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidSpec("piecewise affine lattice needs at least 2x2 points".into()));
    }
    if disp.len() != rows * cols {
        return Err(Error::InvalidSpec("displacement count does not match lattice".into()));
    }
    let cell_w = (width.max(2) - 1) as f64 / (cols - 1) as f64;
    let cell_h = (height.max(2) - 1) as f64 / (rows - 1) as f64;
    let at = |r: usize, c: usize| disp[r * cols + c];
    GeometricMap::from_fn(width, height, |x, y| {
        let gx = (x / cell_w).min((cols - 1) as f64);
        let gy = (y / cell_h).min((rows - 1) as f64);
        let c = (gx.floor() as usize).min(cols - 2);
        let r = (gy.floor() as usize).min(rows - 2);
        let u = gx - c as f64;
        let v = gy - r as f64;
        let p00 = at(r, c);
        let p11 = at(r + 1, c + 1);
        // split along the top-left to bottom-right diagonal
        let (dx, dy) = if u >= v {
            let p10 = at(r, c + 1);
            (
                p00.0 + u * (p10.0 - p00.0) + v * (p11.0 - p10.0),
                p00.1 + u * (p10.1 - p00.1) + v * (p11.1 - p10.1),
            )
        } else {
            let p01 = at(r + 1, c);
            (
                p00.0 + v * (p01.0 - p00.0) + u * (p11.0 - p01.0),
                p00.1 + v * (p01.1 - p00.1) + u * (p11.1 - p01.1),
            )
        };
        (x + dx, y + dy)
    })
}

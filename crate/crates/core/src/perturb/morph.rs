//! Lesion-local manipulations: boundary blurring and radial intensity modulation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use super::Perturbed;
use crate::phantom::mask_stats;
use crate::{Error, ImageSet, ImageVolume, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MorphKind {
    BoundaryBlur,
    RadialGradient,
}

pub const DEFAULT_BAND_WIDTH: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MorphSpec {
    pub kind: MorphKind,
    /// Kernel sigma in pixels for blurring; amplitude level for the gradient.
    pub sigma_level: f64,
    pub band_width: f64,
    pub amplitude_map: BTreeMap<u32, f64>,
}

pub fn default_amplitude_map() -> BTreeMap<u32, f64> {
    [(1, 0.1), (2, 0.2), (3, 0.3)].into_iter().collect()
}

impl MorphSpec {
    pub fn boundary_blur(sigma: f64) -> Self {
        Self {
            kind: MorphKind::BoundaryBlur,
            sigma_level: sigma,
            band_width: DEFAULT_BAND_WIDTH,
            amplitude_map: default_amplitude_map(),
        }
    }

    pub fn radial_gradient(level: u32) -> Self {
        Self {
            kind: MorphKind::RadialGradient,
            sigma_level: level as f64,
            band_width: DEFAULT_BAND_WIDTH,
            amplitude_map: default_amplitude_map(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_level > 0.0 && self.sigma_level.is_finite()) {
            return Err(Error::param("sigma_level", "must be positive"));
        }
        if !(self.band_width >= 1.0 && self.band_width.is_finite()) {
            return Err(Error::param("band_width", "must be at least 1 pixel"));
        }
        if self.kind == MorphKind::RadialGradient {
            self.amplitude()?;
        }
        Ok(())
    }

    /// Gradient amplitude for the configured level.
    pub fn amplitude(&self) -> Result<f64> {
        let level = self.sigma_level;
        if level.fract() != 0.0 || level < 0.0 || level > u32::MAX as f64 {
            return Err(Error::param("sigma_level", "gradient levels are integers"));
        }
        let a = *self
            .amplitude_map
            .get(&(level as u32))
            .ok_or_else(|| Error::param("sigma_level", format!("level {level} missing from amplitude map")))?;
        if !(0.0..1.0).contains(&a) {
            return Err(Error::param("amplitude_map", "amplitudes must lie in [0, 1)"));
        }
        Ok(a)
    }
}

const FAR: f64 = 1e20;

/// Squared 1-D distance transform of a sampled function (lower envelope of parabolas).
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] {
                // k > 0 here: z[0] is -inf
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from each mask pixel to the nearest non-mask pixel.
///
/// Pixels outside the image count as background. Background pixels get 0.
pub fn distance_transform(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    let (pw, ph) = (width + 2, height + 2);
    let mut grid = vec![0.0; pw * ph];
    for r in 0..height {
        for c in 0..width {
            if mask[r * width + c] {
                grid[(r + 1) * pw + c + 1] = FAR;
            }
        }
    }
    let mut col = vec![0.0; ph];
    let mut tmp = vec![0.0; ph];
    for c in 0..pw {
        for r in 0..ph {
            col[r] = grid[r * pw + c];
        }
        dt_1d(&col, &mut tmp);
        for r in 0..ph {
            grid[r * pw + c] = tmp[r];
        }
    }
    let mut row = vec![0.0; pw];
    for r in 0..ph {
        dt_1d(&grid[r * pw..(r + 1) * pw], &mut row);
        grid[r * pw..(r + 1) * pw].copy_from_slice(&row);
    }
    let mut out = vec![0.0; width * height];
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] = grid[(r + 1) * pw + c + 1].sqrt();
        }
    }
    out
}

/// Mask pixels within `band_width` of the mask edge.
pub fn boundary_band(mask: &[bool], width: usize, height: usize, band_width: f64) -> Vec<bool> {
    let d = distance_transform(mask, width, height);
    mask.iter().zip(&d).map(|(&m, &dist)| m && dist <= band_width).collect()
}

fn gaussian_weights(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    (-radius..=radius)
        .map(|k| {
            let x = k as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

fn blur_pass(src: &[f64], dst: &mut [f64], len: usize, lines: usize, stride: usize, step: usize, w: &[f64]) {
    let radius = (w.len() / 2) as isize;
    for line in 0..lines {
        let base = line * stride;
        for i in 0..len as isize {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (j, wk) in w.iter().enumerate() {
                let t = i + j as isize - radius;
                if t >= 0 && t < len as isize {
                    acc += wk * src[base + t as usize * step];
                    norm += wk;
                }
            }
            dst[base + i as usize * step] = acc / norm;
        }
    }
}

/// Separable Gaussian blur truncated at 3 sigma; weights renormalised at the borders.
pub fn gaussian_blur(pixels: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return pixels.to_vec();
    }
    let w = gaussian_weights(sigma);
    let mut tmp = vec![0.0; pixels.len()];
    let mut out = vec![0.0; pixels.len()];
    blur_pass(pixels, &mut tmp, width, height, width, 1, &w);
    blur_pass(&tmp, &mut out, height, width, 1, width, &w);
    out
}

fn require_mask(img: &ImageVolume) -> Result<&[bool]> {
    match img.mask() {
        Some(m) if m.iter().any(|&b| b) => Ok(m),
        Some(_) => Err(Error::image(img.id(), "mask is empty")),
        None => Err(Error::image(img.id(), "image has no mask")),
    }
}

/// Blurs the image and writes the result only into the lesion's boundary band.
pub fn blur_tumour_boundary(set: &ImageSet, spec: &MorphSpec) -> Result<Perturbed> {
    if spec.kind != MorphKind::BoundaryBlur {
        return Err(Error::param("kind", "expected boundary_blur"));
    }
    spec.validate()?;
    let images = set
        .images()
        .iter()
        .map(|img| {
            let mask = require_mask(img)?;
            let (w, h) = (img.width(), img.height());
            let band = boundary_band(mask, w, h, spec.band_width);
            let blurred = gaussian_blur(img.pixels(), w, h, spec.sigma_level);
            let px = img
                .pixels()
                .iter()
                .zip(&blurred)
                .zip(&band)
                .map(|((&p, &b), &inb)| if inb { b.clamp(0.0, 1.0) } else { p })
                .collect();
            img.with_pixels(px)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Perturbed::new(ImageSet::new(set.name(), images)?))
}

/// Multiplies lesion pixels by `1 + a sin(2 pi d / R)`, `d` the distance to the
/// mask centroid and `R` the largest such distance inside the mask.
pub fn apply_radial_gradient(set: &ImageSet, spec: &MorphSpec) -> Result<Perturbed> {
    if spec.kind != MorphKind::RadialGradient {
        return Err(Error::param("kind", "expected radial_gradient"));
    }
    spec.validate()?;
    let a = spec.amplitude()?;
    let mut degenerate = 0usize;
    let images = set
        .images()
        .iter()
        .map(|img| {
            let mask = require_mask(img)?;
            let w = img.width();
            let stats = mask_stats(img.id(), w, Some(mask))?;
            let (cr, cc) = stats.centroid;
            let dist = |i: usize| {
                let (r, c) = ((i / w) as f64, (i % w) as f64);
                ((r - cr) * (r - cr) + (c - cc) * (c - cc)).sqrt()
            };
            let radius = (0..mask.len()).filter(|&i| mask[i]).map(dist).fold(0.0, f64::max);
            if radius == 0.0 || a == 0.0 {
                degenerate += usize::from(radius == 0.0);
                return Ok(img.clone());
            }
            let px = img
                .pixels()
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    if mask[i] {
                        (p * (1.0 + a * (2.0 * PI * dist(i) / radius).sin())).clamp(0.0, 1.0)
                    } else {
                        p
                    }
                })
                .collect();
            img.with_pixels(px)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Perturbed::new(ImageSet::new(set.name(), images)?);
    if degenerate > 0 {
        out.flags.push(format!("zero-radius-identity={degenerate}"));
    }
    Ok(out)
}

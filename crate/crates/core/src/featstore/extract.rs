use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, FeatureMatrix, ImageSet, ImageVolume, Result};

pub const GLOBAL64_DIM: usize = 64;
pub const GLOBAL64_TAG: &str = "global64";

const HIST_BINS: usize = 16;
const DCT_SIZE: usize = 32;
const DCT_COEFFS: usize = 40;
const EDGE_THRESHOLD: f64 = 0.1;

/// Sobel gradient magnitude with replicated borders, scaled so that a unit
/// step between neighbours reads 0.5.
pub fn sobel_magnitude(img: &ImageVolume) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let px = img.pixels();
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        px[r * w + c]
    };
    let mut out = vec![0.0; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            out[r as usize * w + c as usize] = (gx * gx + gy * gy).sqrt() / 8.0;
        }
    }
    out
}

fn moments(px: &[f64]) -> (f64, f64, f64, f64) {
    let n = px.len() as f64;
    let mean = px.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &p in px {
        let d = p - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();
    if std < 1e-12 {
        // constant image: higher moments are defined as zero
        return (mean, 0.0, 0.0, 0.0);
    }
    (mean, std, m3 / (m2 * std), m4 / (m2 * m2) - 3.0)
}

/// Area-averaged resampling onto an `out x out` grid.
fn area_resample(img: &ImageVolume, out: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let fx = w as f64 / out as f64;
    let fy = h as f64 / out as f64;
    let spans = |len: usize, f: f64| -> Vec<Vec<(usize, f64)>> {
        (0..out)
            .map(|i| {
                let lo = i as f64 * f;
                let hi = (i + 1) as f64 * f;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(len);
                (first..last)
                    .filter_map(|k| {
                        let ov = (hi.min((k + 1) as f64) - lo.max(k as f64)).max(0.0);
                        (ov > 0.0).then_some((k, ov))
                    })
                    .collect()
            })
            .collect()
    };
    let xs = spans(w, fx);
    let ys = spans(h, fy);
    let mut res = vec![0.0; out * out];
    for (i, ry) in ys.iter().enumerate() {
        for (j, rx) in xs.iter().enumerate() {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for &(r, wy) in ry {
                for &(c, wx) in rx {
                    acc += wy * wx * img.pixel(r, c);
                    wsum += wy * wx;
                }
            }
            res[i * out + j] = acc / wsum;
        }
    }
    res
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn dct_basis(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            b[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    b
}

/// First `count` (row, col) positions of the JPEG-style zig-zag scan.
fn zigzag(n: usize, count: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count);
    for s in 0..(2 * n - 1) {
        let lo = s.saturating_sub(n - 1);
        let hi = s.min(n - 1);
        let diag: Vec<(usize, usize)> = (lo..=hi).map(|r| (r, s - r)).collect();
        if s % 2 == 0 {
            // even diagonals run bottom-left to top-right
            out.extend(diag.into_iter().rev());
        } else {
            out.extend(diag);
        }
        if out.len() >= count {
            break;
        }
    }
    out.truncate(count);
    out
}

fn dct_features(img: &ImageVolume) -> Vec<f64> {
    let n = DCT_SIZE;
    let small = area_resample(img, n);
    let b = dct_basis(n);
    // rows first: tmp[r][k] = sum_c small[r][c] * b[k][c]
    let mut tmp = vec![0.0; n * n];
    for r in 0..n {
        for k in 0..n {
            tmp[r * n + k] = (0..n).map(|c| small[r * n + c] * b[k * n + c]).sum();
        }
    }
    zigzag(n, DCT_COEFFS)
        .into_iter()
        .map(|(u, v)| (0..n).map(|r| b[u * n + r] * tmp[r * n + v]).sum())
        .collect()
}

/// 64 global statistics of one image: a 16-bin intensity histogram
/// (probability mass), mean, std, skewness, excess kurtosis, Sobel gradient
/// mean and std, edge density at 0.1, histogram entropy in bits, and the
/// first 40 zig-zag coefficients of the 32x32 orthonormal DCT.
pub fn global64_row(img: &ImageVolume) -> Vec<f64> {
    let px = img.pixels();
    let n = px.len() as f64;
    let mut hist = [0.0f64; HIST_BINS];
    for &p in px {
        let bin = ((p * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        hist[bin] += 1.0;
    }
    hist.iter_mut().for_each(|h| *h /= n);
    let entropy: f64 = hist.iter().filter(|&&h| h > 0.0).map(|&h| -h * h.log2()).sum();

    let (mean, std, skew, kurt) = moments(px);
    let grad = sobel_magnitude(img);
    let g_mean = grad.iter().sum::<f64>() / n;
    let g_std = (grad.iter().map(|g| (g - g_mean) * (g - g_mean)).sum::<f64>() / n).sqrt();
    let edges = grad.iter().filter(|&&g| g > EDGE_THRESHOLD).count() as f64 / n;

    let mut row = Vec::with_capacity(GLOBAL64_DIM);
    row.extend_from_slice(&hist);
    row.extend_from_slice(&[mean, std, skew, kurt, g_mean, g_std, edges, entropy]);
    row.extend(dct_features(img));
    debug_assert_eq!(row.len(), GLOBAL64_DIM);
    row
}

fn ids_of(set: &ImageSet) -> Vec<String> {
    set.ids().map(String::from).collect()
}

pub fn extract_global64(set: &ImageSet) -> Result<FeatureMatrix> {
    if set.is_empty() {
        return Err(Error::Empty("image set"));
    }
    let rows: Vec<Vec<f64>> = set.images().iter().map(global64_row).collect();
    FeatureMatrix::from_rows(&rows, ids_of(set), GLOBAL64_TAG)
}

fn cell_bounds(len: usize, g: usize) -> Vec<(usize, usize)> {
    (0..g).map(|i| (i * len / g, (i + 1) * len / g)).collect()
}

/// Per-cell mean, std and Sobel magnitude mean over a `g x g` grid,
/// cells in row-major order, `3 g²` values.
pub fn spatial_row(img: &ImageVolume, g: usize) -> Result<Vec<f64>> {
    if g < 2 {
        return Err(Error::param("grid", "must be at least 2"));
    }
    if img.width() < g || img.height() < g {
        return Err(Error::image(img.id(), format!("smaller than the {g}x{g} grid")));
    }
    let grad = sobel_magnitude(img);
    let w = img.width();
    let mut row = Vec::with_capacity(3 * g * g);
    for (r0, r1) in cell_bounds(img.height(), g) {
        for (c0, c1) in cell_bounds(w, g) {
            let cnt = ((r1 - r0) * (c1 - c0)) as f64;
            let (mut s, mut s2, mut gs) = (0.0, 0.0, 0.0);
            for r in r0..r1 {
                for c in c0..c1 {
                    let p = img.pixel(r, c);
                    s += p;
                    gs += grad[r * w + c];
                }
            }
            let m = s / cnt;
            for r in r0..r1 {
                for c in c0..c1 {
                    let d = img.pixel(r, c) - m;
                    s2 += d * d;
                }
            }
            let sd = (s2 / cnt).sqrt();
            // rounding in the mean leaves ~1e-17 on constant cells
            let sd = if sd < 1e-12 { 0.0 } else { sd };
            row.extend_from_slice(&[m, sd, gs / cnt]);
        }
    }
    Ok(row)
}

pub fn extract_spatial48(set: &ImageSet, g: usize) -> Result<FeatureMatrix> {
    if set.is_empty() {
        return Err(Error::Empty("image set"));
    }
    let rows = set
        .images()
        .iter()
        .map(|img| spatial_row(img, g))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_rows(&rows, ids_of(set), format!("spatial{}:g{g}", 3 * g * g))
}

//! Binary PGM (P5) images. Written at maxval 65535 with big-endian samples;
//! any maxval is accepted on read.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

pub const MAXVAL: u16 = u16::MAX;

/// Nearest 16-bit level, back in `[0, 1]`. Reading a written image yields exactly this.
pub fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * MAXVAL as f64).round() / MAXVAL as f64
}

pub fn encode(width: usize, height: usize, samples: &[f64]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height, "sample count must match the image shape");
    let mut out = format!("P5\n{width} {height}\n{MAXVAL}\n").into_bytes();
    out.reserve(samples.len() * 2);
    for &v in samples {
        let level = (v.clamp(0.0, 1.0) * MAXVAL as f64).round() as u16;
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

/// Header fields: magic, width, height, maxval. Comments run from `#` to end of line.
fn header(bytes: &[u8]) -> Option<([usize; 3], usize)> {
    let mut fields = Vec::with_capacity(4);
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).ok()?);
    }
    if fields[0] != "P5" || i >= bytes.len() {
        return None;
    }
    let nums: Vec<usize> = fields[1..].iter().map(|f| f.parse().ok()).collect::<Option<_>>()?;
    // exactly one whitespace byte separates the header from the raster
    Some(([nums[0], nums[1], nums[2]], i + 1))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let ([w, h, maxval], offset) = header(bytes).ok_or_else(|| CliError::format(path, "not a binary PGM (P5) file"))?;
    if w == 0 || h == 0 || maxval == 0 || maxval > MAXVAL as usize {
        return Err(CliError::format(path, "invalid PGM dimensions or maxval"));
    }
    let wide = maxval > 255;
    let need = w * h * if wide { 2 } else { 1 };
    let raster = &bytes[offset..];
    if raster.len() < need {
        return Err(CliError::format(path, format!("raster truncated: {} of {need} bytes", raster.len())));
    }
    let scale = maxval as f64;
    let samples = if wide {
        raster[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale).collect()
    } else {
        raster[..need].iter().map(|&b| b as f64 / scale).collect()
    };
    Ok((w, h, samples))
}

pub fn write(path: &Path, width: usize, height: usize, samples: &[f64]) -> Result<()> {
    fs::write(path, encode(width, height, samples)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, path)
}

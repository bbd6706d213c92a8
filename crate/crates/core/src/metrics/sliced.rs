//! Sliced (average) Wasserstein distance over random 1-D projections.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, FeatureMatrix, Result, RngStream};

/// `L x d` unit directions drawn from an isotropic Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    pub directions: Vec<f64>,
    pub count: usize,
    pub d: usize,
    pub stream: RngStream,
}

impl ProjectionSet {
    pub fn random(count: usize, d: usize, stream: &RngStream) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("projections", "need at least one direction"));
        }
        let mut r = stream.rng();
        let mut directions = Vec::with_capacity(count * d);
        for _ in 0..count {
            loop {
                let v: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    directions.extend(v.iter().map(|x| x / norm));
                    break;
                }
            }
        }
        Ok(Self {
            directions,
            count,
            d,
            stream: stream.clone(),
        })
    }

    pub fn direction(&self, l: usize) -> &[f64] {
        &self.directions[l * self.d..(l + 1) * self.d]
    }
}

/// Wasserstein-1 between two sorted samples: the integral of the absolute
/// difference of their (piecewise-constant) quantile functions.
pub fn wasserstein_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("wasserstein_1d sample"));
    }
    if x.windows(2).any(|w| w[0] > w[1]) || y.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("wasserstein_1d expects sorted input".into()));
    }
    let (n, m) = (x.len(), y.len());
    if n == m {
        return Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64);
    }
    // walk the merged breakpoints i/n and j/m, in integer units of 1/(n m)
    let (mut i, mut j) = (0usize, 0usize);
    let (mut pos, mut acc) = (0usize, 0.0);
    let total = n * m;
    while pos < total {
        let next_x = (i + 1) * m;
        let next_y = (j + 1) * n;
        let next = next_x.min(next_y);
        acc += (next - pos) as f64 * (x[i] - y[j]).abs();
        pos = next;
        if next == next_x {
            i += 1;
        }
        if next == next_y {
            j += 1;
        }
    }
    Ok(acc / total as f64)
}

fn project_sorted(data: &[f64], d: usize, dir: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = data.chunks_exact(d).map(|r| r.iter().zip(dir).map(|(a, b)| a * b).sum()).collect();
    p.sort_by(f64::total_cmp);
    p
}

/// Mean 1-D Wasserstein-1 distance over `projections` random directions.
pub fn asw(real: &FeatureMatrix, gen: &FeatureMatrix, projections: usize, rng: &RngStream) -> Result<f64> {
    if real.d() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: real.d(),
            actual: gen.d(),
        });
    }
    let d = real.d();
    let set = ProjectionSet::random(projections, d, rng)?;
    let (xr, xg) = (real.to_f64(), gen.to_f64());
    let mut acc = 0.0;
    for l in 0..set.count {
        let dir = set.direction(l);
        acc += wasserstein_1d(&project_sorted(&xr, d, dir), &project_sorted(&xg, d, dir))?;
    }
    Ok(acc / set.count as f64)
}

//! Lloyd's k-means with k-means++ seeding.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::{ClassProbMatrix, Error, FeatureMatrix, Result, RngStream};

const MAX_ITERS: usize = 100;
const SHIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    /// `k x d`, row-major.
    pub centroids: Vec<f64>,
    pub k: usize,
    pub d: usize,
    pub inertia: f64,
    pub iterations: usize,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KMeansModel {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.d..(j + 1) * self.d]
    }

    /// Nearest centroid, lowest index on ties.
    pub fn assign(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.k {
            let d = sq_dist(x, self.centroid(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

fn plus_plus_seed(data: &[f64], n: usize, d: usize, k: usize, rng: &RngStream) -> Vec<f64> {
    let mut r = rng.rng();
    let row = |i: usize| &data[i * d..(i + 1) * d];
    let mut chosen = vec![r.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = r.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` a hair under `target`
            pick.unwrap_or_else(|| dist.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a centre; take the first unused index
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, dd) in dist.iter_mut().enumerate() {
            *dd = dd.min(sq_dist(row(i), row(next)));
        }
    }
    chosen.iter().flat_map(|&i| row(i).iter().copied()).collect()
}

/// Fits `k` clusters to the rows of `real`.
///
/// Iterates until no centroid moves more than 1e-6 or 100 iterations pass.
/// An empty cluster is re-seeded with the point farthest from its assigned
/// centroid (lowest index on ties).
pub fn fit_kmeans(real: &FeatureMatrix, k: usize, rng: &RngStream) -> Result<KMeansModel> {
    let (n, d) = (real.n(), real.d());
    if k < 2 {
        return Err(Error::param("k", "need at least 2 clusters"));
    }
    if n < k {
        return Err(Error::param("k", alloc::format!("{k} clusters but only {n} points")));
    }
    let data = real.to_f64();
    let row = |i: usize| &data[i * d..(i + 1) * d];
    let mut model = KMeansModel {
        centroids: plus_plus_seed(&data, n, d, k, rng),
        k,
        d,
        inertia: 0.0,
        iterations: 0,
    };
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];

    for it in 0..MAX_ITERS {
        model.iterations = it + 1;
        for i in 0..n {
            let (j, dd) = model.assign(row(i));
            labels[i] = j;
            dists[i] = dd;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, x) in sums[labels[i] * d..(labels[i] + 1) * d].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None::<(usize, f64)>, |best, i| match best {
                        Some((_, bd)) if bd >= dists[i] => best,
                        _ => Some((i, dists[i])),
                    })
                    .map_or(0, |(i, _)| i);
                taken[far] = true;
                sums[j * d..(j + 1) * d].copy_from_slice(row(far));
                counts[j] = 1;
            }
        }
        let mut max_shift = 0.0f64;
        for j in 0..k {
            let inv = 1.0 / counts[j] as f64;
            let mut shift = 0.0;
            for t in 0..d {
                let c = sums[j * d + t] * inv;
                let old = model.centroids[j * d + t];
                shift += (c - old) * (c - old);
                model.centroids[j * d + t] = c;
            }
            max_shift = max_shift.max(num_traits::Float::sqrt(shift));
        }
        if max_shift < SHIFT_TOL {
            break;
        }
    }
    model.inertia = (0..n).map(|i| model.assign(row(i)).1).sum();
    Ok(model)
}

/// Soft cluster memberships: row `i` is the softmax of `-|x_i - c_j|² / τ`.
pub fn pseudo_class_probs(model: &KMeansModel, x: &FeatureMatrix, temperature: f64) -> Result<ClassProbMatrix> {
    if x.d() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.d,
            actual: x.d(),
        });
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::param("temperature", "must be positive"));
    }
    let mut probs = Vec::with_capacity(x.n() * model.k);
    for i in 0..x.n() {
        let xi = x.row_f64(i);
        let logits: Vec<f64> = (0..model.k).map(|j| -sq_dist(&xi, model.centroid(j)) / temperature).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| num_traits::Float::exp(l - top)).collect();
        let z: f64 = exps.iter().sum();
        let mut row: Vec<f64> = exps.iter().map(|e| e / z).collect();
        // pin the row sum to one against rounding
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
        probs.extend(row);
    }
    ClassProbMatrix::new(model.k, probs, x.ids().to_vec())
}

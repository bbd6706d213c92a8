//! Nearest-neighbour metrics in feature space: PRDC, realism, AuthPct and
//! the perceptual-distance adaptations.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::stats::median;
use crate::{Error, FeatureMatrix, Result};

use super::euclidean;

/// Reported realism values are capped here (zero distance would be infinite).
pub const REALISM_CAP: f64 = 1e6;

fn check_dims(real: &FeatureMatrix, gen: &FeatureMatrix) -> Result<()> {
    if real.d() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: real.d(),
            actual: gen.d(),
        });
    }
    Ok(())
}

/// Points with the radius of the ball reaching their k-th nearest neighbour
/// (self excluded).
#[derive(Debug, Clone)]
pub struct ManifoldIndex {
    points: Vec<f64>,
    d: usize,
    k: usize,
    radii: Vec<f64>,
}

impl ManifoldIndex {
    pub fn new(points: &FeatureMatrix, k: usize) -> Result<Self> {
        let n = points.n();
        if k == 0 || k >= n {
            return Err(Error::param("k", alloc::format!("need 1 <= k < n, got k = {k}, n = {n}")));
        }
        let d = points.d();
        let data = points.to_f64();
        let mut radii = Vec::with_capacity(n);
        let mut row = Vec::with_capacity(n - 1);
        for i in 0..n {
            row.clear();
            for j in (0..n).filter(|&j| j != i) {
                row.push(euclidean(&data[i * d..(i + 1) * d], &data[j * d..(j + 1) * d]));
            }
            row.sort_by(f64::total_cmp);
            radii.push(row[k - 1]);
        }
        Ok(Self {
            points: data,
            d,
            k,
            radii,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prdc {
    pub precision: f64,
    pub recall: f64,
    pub density: f64,
    pub coverage: f64,
}

/// Default neighbourhood size: 5, or 3 for desk-scale samples under 50.
pub fn default_k(n: usize) -> usize {
    if n < 50 {
        3
    } else {
        5
    }
}

/// Precision, recall, density and coverage with k-NN balls (closed balls,
/// radii computed without the centre point itself).
pub fn prdc(real: &FeatureMatrix, gen: &FeatureMatrix, k: usize) -> Result<Prdc> {
    check_dims(real, gen)?;
    if k == 0 || k >= real.n().min(gen.n()) {
        return Err(Error::param(
            "k",
            alloc::format!("need 1 <= k < min(n_real, n_gen) = {}", real.n().min(gen.n())),
        ));
    }
    let ri = ManifoldIndex::new(real, k)?;
    let gi = ManifoldIndex::new(gen, k)?;
    let (nr, ng) = (ri.len(), gi.len());

    let mut dist = Vec::with_capacity(nr * ng);
    for g in 0..ng {
        for r in 0..nr {
            dist.push(euclidean(gi.point(g), ri.point(r)));
        }
    }
    let at = |g: usize, r: usize| dist[g * nr + r];

    let mut precise = 0usize;
    let mut inside = 0usize;
    for g in 0..ng {
        let hits = (0..nr).filter(|&r| at(g, r) <= ri.radii[r]).count();
        inside += hits;
        precise += usize::from(hits > 0);
    }
    let recalled = (0..nr).filter(|&r| (0..ng).any(|g| at(g, r) <= gi.radii[g])).count();
    let covered = (0..nr)
        .filter(|&r| {
            let nearest = (0..ng).map(|g| at(g, r)).fold(f64::INFINITY, f64::min);
            nearest <= ri.radii[r]
        })
        .count();

    Ok(Prdc {
        precision: precise as f64 / ng as f64,
        recall: recalled as f64 / nr as f64,
        density: inside as f64 / (k * ng) as f64,
        coverage: covered as f64 / nr as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realism {
    pub per_sample: Vec<f64>,
    pub median: f64,
}

/// Radius-ratio realism: for each generated point, the largest
/// `r_k(x) / d(g, x)` over the real points whose radius is at or below the
/// median radius. Zero distances are floored at 1e-12 and values capped at
/// [`REALISM_CAP`].
pub fn realism(real: &FeatureMatrix, gen: &FeatureMatrix, k: usize) -> Result<Realism> {
    check_dims(real, gen)?;
    let ri = ManifoldIndex::new(real, k)?;
    let cut = median(ri.radii());
    let kept: Vec<usize> = (0..ri.len()).filter(|&i| ri.radii[i] <= cut).collect();
    let gdata = gen.to_f64();
    let d = gen.d();
    let per_sample: Vec<f64> = gdata
        .chunks_exact(d)
        .map(|g| {
            kept.iter()
                .map(|&i| ri.radii[i] / euclidean(g, ri.point(i)).max(1e-12))
                .fold(0.0, f64::max)
                .min(REALISM_CAP)
        })
        .collect();
    let median = median(&per_sample);
    Ok(Realism { per_sample, median })
}

/// Index of the nearest row of `data` (lowest index on ties) and its distance.
fn nearest(data: &[f64], d: usize, q: &[f64], skip: Option<usize>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, row) in data.chunks_exact(d).enumerate() {
        if Some(i) == skip {
            continue;
        }
        let dd = euclidean(q, row);
        if dd < best.1 {
            best = (i, dd);
        }
    }
    best
}

/// Percentage of generated samples judged authentic. A sample is
/// inauthentic when it is strictly closer to its nearest real point `r*`
/// than `r*` is to its own nearest real neighbour.
pub fn authpct(real: &FeatureMatrix, gen: &FeatureMatrix) -> Result<f64> {
    check_dims(real, gen)?;
    if real.n() < 2 {
        return Err(Error::param("n_real", "authpct needs at least two real rows"));
    }
    let d = real.d();
    let rdata = real.to_f64();
    let gap: Vec<f64> = rdata
        .chunks_exact(d)
        .enumerate()
        .map(|(i, r)| nearest(&rdata, d, r, Some(i)).1)
        .collect();
    let authentic = gen
        .to_f64()
        .chunks_exact(d)
        .filter(|g| {
            let (star, dist) = nearest(&rdata, d, g, None);
            dist >= gap[star]
        })
        .count();
    Ok(100.0 * authentic as f64 / gen.n() as f64)
}

/// Number of generated rows bit-identical to some real row.
pub fn exact_copies(real: &FeatureMatrix, gen: &FeatureMatrix) -> usize {
    if real.d() != gen.d() {
        return 0;
    }
    (0..gen.n()).filter(|&g| (0..real.n()).any(|r| gen.row(g) == real.row(r))).count()
}

/// Mean over generated rows of the distance to the closest real row.
pub fn perceptual_nn_distance(real: &FeatureMatrix, gen: &FeatureMatrix) -> Result<f64> {
    check_dims(real, gen)?;
    let d = real.d();
    let rdata = real.to_f64();
    let total: f64 = gen.to_f64().chunks_exact(d).map(|g| nearest(&rdata, d, g, None).1).sum();
    Ok(total / gen.n() as f64)
}

/// Mean distance over all unordered pairs of generated rows.
pub fn perceptual_intra_distance(gen: &FeatureMatrix) -> Result<f64> {
    let n = gen.n();
    if n < 2 {
        return Err(Error::param("n", "intra distance needs at least two rows"));
    }
    let d = gen.d();
    let data = gen.to_f64();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += euclidean(&data[i * d..(i + 1) * d], &data[j * d..(j + 1) * d]);
        }
    }
    Ok(acc / (n * (n - 1) / 2) as f64)
}

/// Stand-in for a learned similarity: mean over generated rows of the best
/// cosine similarity to any real row; zero-norm rows score 0.
pub fn dreamsim_score(real: &FeatureMatrix, gen: &FeatureMatrix) -> Result<f64> {
    check_dims(real, gen)?;
    let d = real.d();
    let unit = |fm: &FeatureMatrix| -> Vec<Option<Vec<f64>>> {
        fm.to_f64()
            .chunks_exact(d)
            .map(|r| {
                let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                (norm > 0.0).then(|| r.iter().map(|v| v / norm).collect())
            })
            .collect()
    };
    let ru = unit(real);
    let total: f64 = unit(gen)
        .iter()
        .map(|g| match g {
            None => 0.0,
            Some(g) => ru
                .iter()
                .map(|r| match r {
                    None => 0.0,
                    Some(r) => g.iter().zip(r).map(|(a, b)| a * b).sum(),
                })
                .fold(f64::NEG_INFINITY, f64::max),
        })
        .sum();
    Ok(total / gen.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line(xs: &[f64]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        FeatureMatrix::from_rows_anon(&rows).unwrap()
    }

    #[test]
    fn prdc_self_comparison() {
        let x = line(&[0.0, 1.0, 3.0, 7.0, 8.5]);
        let p = prdc(&x, &x, 1).unwrap();
        assert_eq!((p.precision, p.recall, p.coverage), (1.0, 1.0, 1.0));
    }

    #[test]
    fn prdc_far_clouds_all_zero() {
        let p = prdc(&line(&[0.0, 1.0, 2.0]), &line(&[1e6, 1e6 + 1.0, 1e6 + 2.0]), 1).unwrap();
        assert_eq!(p, Prdc { precision: 0.0, recall: 0.0, density: 0.0, coverage: 0.0 });
    }

    #[test]
    fn prdc_k_precondition() {
        assert!(prdc(&line(&[0.0, 1.0, 3.0]), &line(&[0.5]), 1).is_err());
    }

    #[test]
    fn authpct_examples() {
        let real = line(&[0.0, 1.0, 5.0]);
        assert_eq!(authpct(&real, &line(&[0.0, 5.0])).unwrap(), 0.0);
        assert_eq!(authpct(&real, &line(&[100.0, -50.0])).unwrap(), 100.0);
        assert_eq!(authpct(&line(&[0.0, 1.0]), &line(&[0.4])).unwrap(), 0.0);
        // a tie with the neighbour gap counts as authentic
        assert_eq!(authpct(&line(&[0.0, 1.0]), &line(&[-1.0])).unwrap(), 100.0);
    }

    #[test]
    fn perceptual_examples() {
        let real = line(&[1.0]);
        let gen = line(&[0.0, 2.0]);
        assert_eq!(perceptual_nn_distance(&real, &gen).unwrap(), 1.0);
        assert_eq!(perceptual_intra_distance(&gen).unwrap(), 2.0);
        assert_eq!(perceptual_nn_distance(&gen, &line(&[2.0])).unwrap(), 0.0);
        let collapsed = FeatureMatrix::from_rows(&[vec![3.0], vec![3.0]], vec!["a".into(), "b".into()], "t").unwrap();
        assert_eq!(perceptual_intra_distance(&collapsed).unwrap(), 0.0);
    }

    #[test]
    fn dreamsim_examples() {
        let real = FeatureMatrix::from_rows_anon(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert!((dreamsim_score(&real, &real).unwrap() - 1.0).abs() < 1e-15);
        let ortho_r = FeatureMatrix::from_rows_anon(&[vec![1.0, 0.0]]).unwrap();
        let ortho_g = FeatureMatrix::from_rows_anon(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(dreamsim_score(&ortho_r, &ortho_g).unwrap(), 0.0);
        let half = FeatureMatrix::from_rows_anon(&[vec![0.0, 1.0]]).unwrap();
        assert!((dreamsim_score(&real, &half).unwrap() - 1.0).abs() < 1e-15);
        let zero = FeatureMatrix::from_rows_anon(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(dreamsim_score(&real, &zero).unwrap(), 0.0);
    }

    #[test]
    fn realism_line_construction() {
        // real {0, 1, 2, 10}, k = 1: radii {1, 1, 1, 8}, median 1, so the
        // outlier at 10 is dropped; g = 3 sits at distance 1 from x* = 2
        let real = line(&[0.0, 1.0, 2.0, 10.0]);
        let r = realism(&real, &line(&[3.0]), 1).unwrap();
        assert!((r.per_sample[0] - 1.0).abs() < 1e-15);
        let on_point = realism(&real, &line(&[1.0]), 1).unwrap();
        assert_eq!(on_point.per_sample[0], REALISM_CAP);
        let far = realism(&real, &line(&[1e9]), 1).unwrap();
        assert!(far.per_sample[0] < 1e-8);
        assert!(realism(&real, &line(&[1.0]), 4).is_err());
    }
}

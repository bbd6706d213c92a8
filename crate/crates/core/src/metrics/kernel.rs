//! Kernel-based metrics: KID (polynomial MMD), RBF MMD and the Vendi score.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;

use crate::linalg::{symmetric_eigen, Matrix};
use crate::stats::{mean, median, pop_std};
use crate::{Error, FeatureMatrix, Result, RngStream};

use super::euclidean;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum KernelKind {
    /// `(xᵀy / d + 1)³`
    Poly3,
    /// `exp(-|x - y|² / (2 h²))`
    Rbf,
    /// Dot product of L2-normalised rows.
    Cosine,
}

/// Symmetric Gram matrix of one sample under a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: Matrix,
    pub kernel: KernelKind,
}

fn poly3(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let t = dot / a.len() as f64 + 1.0;
    t * t * t
}

fn check_dims(real: &FeatureMatrix, gen: &FeatureMatrix) -> Result<()> {
    if real.d() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: real.d(),
            actual: gen.d(),
        });
    }
    Ok(())
}

/// Unbiased MMD² from row-major samples under kernel `k`.
fn unbiased_mmd2(x: &[f64], y: &[f64], d: usize, k: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let nx = x.len() / d;
    let ny = y.len() / d;
    let within = |s: &[f64], n: usize| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                acc += k(&s[i * d..(i + 1) * d], &s[j * d..(j + 1) * d]);
            }
        }
        2.0 * acc / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            cross += k(&x[i * d..(i + 1) * d], &y[j * d..(j + 1) * d]);
        }
    }
    within(x, nx) + within(y, ny) - 2.0 * cross / (nx * ny) as f64
}

/// Default KID subset size, `min(100, n_r, n_g)`.
pub fn default_kid_subset(n_real: usize, n_gen: usize) -> usize {
    100.min(n_real).min(n_gen)
}

/// Kernel Inception Distance: unbiased polynomial-kernel MMD² averaged over
/// `num_subsets` random subsets of `subset_size` rows from each side.
/// Returns the mean and the population standard deviation over subsets.
pub fn kid(
    real: &FeatureMatrix,
    gen: &FeatureMatrix,
    subset_size: usize,
    num_subsets: usize,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    check_dims(real, gen)?;
    let s = subset_size;
    if s < 2 {
        return Err(Error::param("subset_size", "must be at least 2"));
    }
    if s > real.n().min(gen.n()) {
        return Err(Error::param(
            "subset_size",
            alloc::format!("{s} exceeds the smaller sample ({})", real.n().min(gen.n())),
        ));
    }
    if num_subsets == 0 {
        return Err(Error::param("num_subsets", "must be at least 1"));
    }
    let d = real.d();
    let (xr, xg) = (real.to_f64(), gen.to_f64());
    let gather = |all: &[f64], idx: &[usize]| -> Vec<f64> {
        idx.iter().flat_map(|&i| all[i * d..(i + 1) * d].iter().copied()).collect()
    };
    let mut ir: Vec<usize> = (0..real.n()).collect();
    let mut ig: Vec<usize> = (0..gen.n()).collect();
    let mut estimates = Vec::with_capacity(num_subsets);
    for m in 0..num_subsets {
        let stream = rng.child(m as u64);
        let mut r = stream.rng();
        ir.sort_unstable();
        ig.sort_unstable();
        let (sr, _) = ir.partial_shuffle(&mut r, s);
        let x = gather(&xr, sr);
        let (sg, _) = ig.partial_shuffle(&mut r, s);
        let y = gather(&xg, sg);
        estimates.push(unbiased_mmd2(&x, &y, d, poly3));
    }
    Ok((mean(&estimates), pop_std(&estimates)))
}

/// Unbiased RBF-kernel MMD² with the bandwidth set to the median pairwise
/// distance of the pooled sample. A zero median (all points equal) gives 0.
pub fn mmd_rbf(real: &FeatureMatrix, gen: &FeatureMatrix) -> Result<f64> {
    check_dims(real, gen)?;
    if real.n() < 2 || gen.n() < 2 {
        return Err(Error::param("n", "mmd_rbf needs at least two rows per side"));
    }
    let d = real.d();
    let x = real.to_f64();
    let y = gen.to_f64();
    let pooled: Vec<&[f64]> = x.chunks_exact(d).chain(y.chunks_exact(d)).collect();
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            dists.push(euclidean(pooled[i], pooled[j]));
        }
    }
    let h = median(&dists);
    if !(h > 0.0) {
        return Ok(0.0);
    }
    let denom = 2.0 * h * h;
    let k = |a: &[f64], b: &[f64]| {
        let sq: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        (-sq / denom).exp()
    };
    Ok(unbiased_mmd2(&x, &y, d, k))
}

/// Rows scaled to unit L2 norm; zero rows become the first basis vector.
fn unit_rows(x: &FeatureMatrix) -> Vec<f64> {
    let d = x.d();
    let mut out = x.to_f64();
    for row in out.chunks_exact_mut(d) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        } else {
            row[0] = 1.0;
        }
    }
    out
}

/// Cosine Gram matrix of `x` (diagonal exactly one).
pub fn cosine_kernel(x: &FeatureMatrix) -> KernelMatrix {
    let d = x.d();
    let n = x.n();
    let u = unit_rows(x);
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in i + 1..n {
            let v: f64 = u[i * d..(i + 1) * d].iter().zip(&u[j * d..(j + 1) * d]).map(|(a, b)| a * b).sum();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    KernelMatrix {
        values: k,
        kernel: KernelKind::Cosine,
    }
}

/// Vendi score: exponential of the Shannon entropy of the eigenvalues of
/// `K / n` under the cosine kernel.
///
/// When `d < n` the eigenvalues are taken from the `d x d` matrix `UᵀU / n`,
/// which has the same non-zero spectrum.
pub fn vendi(x: &FeatureMatrix) -> Result<f64> {
    let (n, d) = (x.n(), x.d());
    let gram = if n <= d {
        let k = cosine_kernel(x).values;
        Matrix::from_vec(n, n, k.data().iter().map(|v| v / n as f64).collect())?
    } else {
        let u = unit_rows(x);
        let mut c = Matrix::zeros(d, d);
        for row in u.chunks_exact(d) {
            for a in 0..d {
                for b in a..d {
                    c[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = c[(a, b)] / n as f64;
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        c
    };
    let mut lambdas: Vec<f64> = symmetric_eigen(&gram)?.values.into_iter().map(|l| l.max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numeric {
            metric: "vendi",
            reason: "kernel spectrum vanished".into(),
        });
    }
    lambdas.iter_mut().for_each(|l| *l /= total);
    let entropy: f64 = lambdas.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.ln()).sum();
    Ok(entropy.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand_distr::{Distribution, Normal};

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows_anon(rows).unwrap()
    }

    #[test]
    fn kid_hand_kernel_sums() {
        // poly3 on d = 1: k(0,0) = 1, k(1,1) = 8, k(0,1) = 1, so 1 + 8 - 2 = 7
        let x = fm(&[vec![0.0], vec![0.0]]);
        let y = FeatureMatrix::from_rows(&[vec![1.0], vec![1.0]], vec!["a".into(), "b".into()], "t").unwrap();
        let (m, s) = kid(&x, &y, 2, 1, &RngStream::new(0)).unwrap();
        assert_eq!(m, 7.0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn kid_subset_too_large() {
        let x = fm(&[vec![0.0], vec![1.0]]);
        assert!(kid(&x, &x, 3, 1, &RngStream::new(0)).is_err());
        assert!(kid(&x, &x, 1, 1, &RngStream::new(0)).is_err());
    }

    #[test]
    fn mmd_identical_sets_nonpositive() {
        let x = fm(&[vec![0.0, 1.0], vec![2.0, 0.5], vec![1.0, 1.0], vec![3.0, -1.0]]);
        let v = mmd_rbf(&x, &x).unwrap();
        assert!(v <= 0.0);
        let same = fm(&vec![vec![0.5, 0.5]; 4]);
        assert_eq!(mmd_rbf(&same, &same).unwrap(), 0.0);
    }

    #[test]
    fn mmd_far_clouds_bounded() {
        let mut r = RngStream::new(1).rng();
        let nd = Normal::new(0.0, 0.1).unwrap();
        let a: Vec<Vec<f64>> = (0..30).map(|_| vec![nd.sample(&mut r), nd.sample(&mut r)]).collect();
        let b: Vec<Vec<f64>> = (0..30).map(|_| vec![100.0 + nd.sample(&mut r), nd.sample(&mut r)]).collect();
        let v = mmd_rbf(&fm(&a), &fm(&b)).unwrap();
        assert!(v > 0.5 && v <= 2.0, "{v}");
    }

    #[test]
    fn vendi_examples() {
        assert!((vendi(&fm(&vec![vec![1.0, 2.0, 3.0]; 5])).unwrap() - 1.0).abs() < 1e-9);
        let eye: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| if i == j { 2.0 } else { 0.0 }).collect()).collect();
        assert!((vendi(&fm(&eye)).unwrap() - 6.0).abs() < 1e-9);
        let clusters = fm(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 3.0], vec![0.0, 3.0]]);
        assert!((vendi(&clusters).unwrap() - 2.0).abs() < 1e-9);
        // zero rows collapse onto the first axis
        let zeros = fm(&[vec![0.0, 0.0], vec![5.0, 0.0]]);
        assert!((vendi(&zeros).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vendi_gram_and_covariance_paths_agree() {
        let mut r = RngStream::new(4).rng();
        let nd = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..5).map(|_| nd.sample(&mut r)).collect()).collect();
        let tall = vendi(&fm(&rows)).unwrap();
        let k = cosine_kernel(&fm(&rows)).values;
        let mut l: Vec<f64> = symmetric_eigen(&k).unwrap().values.iter().map(|v| v.max(0.0) / 12.0).collect();
        let t: f64 = l.iter().sum();
        l.iter_mut().for_each(|v| *v /= t);
        let h: f64 = l.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
        assert!((tall - h.exp()).abs() < 1e-9);
    }
}

//! Fréchet distances between Gaussian fits: FID, sFID and the
//! 1/N-extrapolated FD∞.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;

use crate::linalg::{mean_and_covariance, symmetric_eigen, Matrix};
use crate::{Error, FeatureMatrix, Result, RngStream};

/// Mean vector and covariance of a feature sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    pub n: usize,
}

fn symmetry_tol(a: &Matrix) -> f64 {
    let scale = a.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    1e-9 * scale
}

impl GaussianMoments {
    pub fn new(mu: Vec<f64>, sigma: Matrix, n: usize) -> Result<Self> {
        if !sigma.is_square() || sigma.rows() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                actual: sigma.rows(),
            });
        }
        if sigma.asymmetry() > symmetry_tol(&sigma) {
            return Err(Error::InvalidInput("covariance is not symmetric".into()));
        }
        Ok(Self { mu, sigma, n })
    }

    pub fn from_features(fm: &FeatureMatrix) -> Self {
        let (mu, sigma) = mean_and_covariance(&fm.to_f64(), fm.n(), fm.d());
        Self { mu, sigma, n: fm.n() }
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }
}

/// Principal square root of a symmetric PSD matrix through its
/// eigendecomposition, negative eigenvalues clamped to zero.
pub fn matrix_sqrt_psd(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            actual: a.cols(),
        });
    }
    if a.asymmetry() > symmetry_tol(a) {
        return Err(Error::InvalidInput("matrix_sqrt_psd needs a symmetric matrix".into()));
    }
    Ok(symmetric_eigen(a)?.reconstruct_with(|v| v.max(0.0).sqrt()))
}

/// Covariance eigendecomposition, shifted by `1e-6 · tr/d` when the smallest
/// eigenvalue is below 1e-10.
fn regularized_eigen(sigma: &Matrix) -> Result<crate::linalg::SymmetricEigen> {
    let mut e = symmetric_eigen(sigma)?;
    let d = sigma.rows();
    let min = e.values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 1e-10 {
        let eps = 1e-6 * sigma.trace() / d as f64;
        e.values.iter_mut().for_each(|v| *v += eps);
    }
    Ok(e)
}

/// `‖μ_r − μ_g‖² + tr Σ_r + tr Σ_g − 2 tr sqrtm(Σ_r^½ Σ_g Σ_r^½)`.
pub fn fid(real: &GaussianMoments, gen: &GaussianMoments) -> Result<f64> {
    if real.d() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: real.d(),
            actual: gen.d(),
        });
    }
    let er = regularized_eigen(&real.sigma)?;
    let eg = regularized_eigen(&gen.sigma)?;
    let tr_r: f64 = er.values.iter().sum();
    let tr_g: f64 = eg.values.iter().sum();
    let sr = er.reconstruct_with(|v| v.max(0.0).sqrt());
    let sg = eg.reconstruct_with(|v| v);
    let mut inner = sr.matmul(&sg)?.matmul(&sr)?;
    inner.symmetrize();
    let cross: f64 = symmetric_eigen(&inner)?.values.iter().map(|v| v.max(0.0).sqrt()).sum();
    let mean_term: f64 = real.mu.iter().zip(&gen.mu).map(|(a, b)| (a - b) * (a - b)).sum();
    let value = mean_term + tr_r + tr_g - 2.0 * cross;
    let tol = 1e-8 * (tr_r + tr_g).max(1.0);
    if value < -tol || !value.is_finite() {
        return Err(Error::Numeric {
            metric: "fid",
            reason: alloc::format!("value {value} is not a valid distance"),
        });
    }
    Ok(value.max(0.0))
}

pub fn fid_features(real: &FeatureMatrix, gen: &FeatureMatrix) -> Result<f64> {
    if real.d() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: real.d(),
            actual: gen.d(),
        });
    }
    fid(&GaussianMoments::from_features(real), &GaussianMoments::from_features(gen))
}

/// FID on spatially resolved features.
pub fn sfid(real_spatial: &FeatureMatrix, gen_spatial: &FeatureMatrix) -> Result<f64> {
    fid_features(real_spatial, gen_spatial)
}

/// Ordinary least squares of `y` on `x`; returns `(slope, intercept)`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Five geometric steps from `n/5` to `n`.
pub fn default_fd_inf_sizes(n: usize) -> Vec<usize> {
    let lo = (n as f64 / 5.0).max(2.0);
    let mut sizes: Vec<usize> = (0..5)
        .map(|i| (lo * (n as f64 / lo).powf(i as f64 / 4.0)).round() as usize)
        .map(|s| s.clamp(2, n))
        .collect();
    sizes.dedup();
    sizes
}

/// FID extrapolated to infinite sample size: FID is measured on matched
/// random subsamples of each size (averaged over `reps`), regressed on
/// `1/N`, and the intercept (clamped at zero) is returned.
pub fn fd_inf(real: &FeatureMatrix, gen: &FeatureMatrix, sizes: &[usize], reps: usize, rng: &RngStream) -> Result<f64> {
    if real.d() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: real.d(),
            actual: gen.d(),
        });
    }
    let mut distinct: Vec<usize> = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::param("sizes", "need at least two distinct subsample sizes"));
    }
    let cap = real.n().min(gen.n());
    if let Some(&bad) = distinct.iter().find(|&&s| s < 2 || s > cap) {
        return Err(Error::param("sizes", alloc::format!("size {bad} outside [2, {cap}]")));
    }
    let reps = reps.max(1);
    let mut points = Vec::with_capacity(distinct.len());
    for (si, &size) in distinct.iter().enumerate() {
        let mut acc = 0.0;
        for rep in 0..reps {
            let stream = rng.descend(&[si as u64, rep as u64]);
            let pick = |fm: &FeatureMatrix, tag: u64| -> Result<FeatureMatrix> {
                let mut idx: Vec<usize> = (0..fm.n()).collect();
                let (chosen, _) = idx.partial_shuffle(&mut stream.child(tag).rng(), size);
                fm.select(chosen)
            };
            acc += fid_features(&pick(real, 0)?, &pick(gen, 1)?)?;
        }
        points.push((1.0 / size as f64, acc / reps as f64));
    }
    Ok(fit_line(&points).1.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn m1(mu: f64, var: f64) -> GaussianMoments {
        GaussianMoments::new(vec![mu], Matrix::diag(&[var]), 0).unwrap()
    }

    #[test]
    fn sqrt_examples() {
        let i = matrix_sqrt_psd(&Matrix::identity(3)).unwrap();
        assert!(i.sub(&Matrix::identity(3)).frobenius() < 1e-15);
        let s = matrix_sqrt_psd(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!(s.sub(&Matrix::diag(&[2.0, 3.0])).frobenius() < 1e-15);
        let asym = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matrix_sqrt_psd(&asym).is_err());
    }

    #[test]
    fn sqrt_reconstructs_random_psd() {
        let mut r = RngStream::new(6).rng();
        let d = 6;
        let b = Matrix::from_vec(d, d, (0..d * d).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let a = b.matmul(&b.transpose()).unwrap();
        let s = matrix_sqrt_psd(&a).unwrap();
        let err = s.matmul(&s).unwrap().sub(&a).frobenius() / a.frobenius();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn univariate_closed_form() {
        assert!((fid(&m1(0.0, 1.0), &m1(1.0, 4.0)).unwrap() - 2.0).abs() < 1e-9);
        assert!(fid(&m1(0.3, 2.0), &m1(0.3, 2.0)).unwrap() < 1e-6);
        let a = m1(-1.0, 0.5);
        let b = m1(2.0, 3.0);
        let want = 9.0 + (0.5f64.sqrt() - 3.0f64.sqrt()).powi(2);
        assert!((fid(&a, &b).unwrap() - want).abs() < 1e-9);
        assert!((fid(&a, &b).unwrap() - fid(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let two = GaussianMoments::new(vec![0.0, 0.0], Matrix::identity(2), 0).unwrap();
        assert!(fid(&m1(0.0, 1.0), &two).is_err());
    }

    #[test]
    fn singular_covariances_are_fine() {
        let z = GaussianMoments::new(vec![0.0, 0.0], Matrix::zeros(2, 2), 1).unwrap();
        assert_eq!(fid(&z, &z).unwrap(), 0.0);
        let mut rank1 = Matrix::zeros(2, 2);
        rank1[(0, 0)] = 1.0;
        let a = GaussianMoments::new(vec![0.0, 0.0], rank1, 0).unwrap();
        assert!(fid(&a, &a).unwrap() < 1e-6);
    }

    #[test]
    fn line_fit_example() {
        let (slope, icpt) = fit_line(&[(0.01, 2.1), (0.02, 2.2)]);
        assert!((slope - 10.0).abs() < 1e-9);
        assert!((icpt - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fd_inf_needs_two_sizes() {
        let fm = FeatureMatrix::from_rows_anon(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(fd_inf(&fm, &fm, &[3], 1, &RngStream::new(0)).is_err());
        assert!(fd_inf(&fm, &fm, &[3, 3], 1, &RngStream::new(0)).is_err());
    }

    #[test]
    fn default_sizes_are_geometric() {
        assert_eq!(default_fd_inf_sizes(2000), vec![400, 598, 894, 1337, 2000]);
    }

    #[test]
    fn fd_inf_matched_distributions_near_zero() {
        let mut r = RngStream::new(99).rng();
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |n: usize| {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| nd.sample(&mut r)).collect()).collect();
            FeatureMatrix::from_rows_anon(&rows).unwrap()
        };
        let real = draw(2000);
        let gen = draw(2000);
        let v = fd_inf(&real, &gen, &default_fd_inf_sizes(2000), 3, &RngStream::new(5)).unwrap();
        assert!((0.0..=0.05).contains(&v), "{v}");
    }
}

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{cholesky, forward_substitute, mean_and_covariance};
use crate::{Error, FeatureMatrix, Result};

/// Feature likelihood score: mean log-density of the generated rows under a
/// full-covariance Gaussian fitted to the real rows, with the covariance
/// shifted by `1e-3 · tr/d` so it is always definite.
pub fn fls(real: &FeatureMatrix, gen: &FeatureMatrix) -> Result<f64> {
    if real.d() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: real.d(),
            actual: gen.d(),
        });
    }
    let d = real.d();
    let (mu, mut cov) = mean_and_covariance(&real.to_f64(), real.n(), d);
    let eps = (1e-3 * cov.trace() / d as f64).max(1e-12);
    cov.add_diagonal(eps);
    let l = cholesky(&cov).map_err(|_| Error::Numeric {
        metric: "fls",
        reason: "regularised covariance not positive definite".into(),
    })?;
    let log_det: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
    let norm = -0.5 * (d as f64 * (2.0 * PI).ln() + log_det);
    let total: f64 = gen
        .to_f64()
        .chunks_exact(d)
        .map(|g| {
            let centered: Vec<f64> = g.iter().zip(&mu).map(|(a, b)| a - b).collect();
            let z = forward_substitute(&l, &centered);
            norm - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
        })
        .sum();
    Ok(total / gen.n() as f64)
}

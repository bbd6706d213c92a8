//! Three-sample data-copying statistic (Ct).
//!
//! Feature space is cut into cells by k-means on the training sample. In
//! every cell holding enough generated and held-out test points, the
//! distances to the nearest training point are compared with a Mann-Whitney
//! rank-sum test; the cell z-scores are averaged with test-mass weights.
//! Negative values mean generated samples sit closer to the training data
//! than fresh data does (copying), positive values mean over-dispersion.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::featstore::fit_kmeans;
use crate::{Error, FeatureMatrix, Result, RngStream};

use super::euclidean;

/// Cells with fewer generated or test points than this are skipped.
pub const CELL_FLOOR: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct CtScore {
    /// Signed, test-mass weighted z.
    pub value: f64,
    pub cell_z: Vec<Option<f64>>,
    pub cells_used: usize,
}

fn nearest_train(train: &[f64], d: usize, q: &[f64]) -> f64 {
    train.chunks_exact(d).map(|t| euclidean(q, t)).fold(f64::INFINITY, f64::min)
}

/// Normal-approximated Mann-Whitney z of `gen` against `test`; `U` counts
/// pairs with the generated distance larger, ties counting one half.
pub fn mann_whitney_z(gen: &[f64], test: &[f64]) -> f64 {
    let (m, n) = (gen.len() as f64, test.len() as f64);
    let mut u = 0.0;
    for g in gen {
        for t in test {
            if g > t {
                u += 1.0;
            } else if g == t {
                u += 0.5;
            }
        }
    }
    (u - m * n / 2.0) / (m * n * (m + n + 1.0) / 12.0).sqrt()
}

pub fn ct_score(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    gen: &FeatureMatrix,
    cells: usize,
    rng: &RngStream,
) -> Result<CtScore> {
    for other in [test, gen] {
        if other.d() != train.d() {
            return Err(Error::DimensionMismatch {
                expected: train.d(),
                actual: other.d(),
            });
        }
    }
    let d = train.d();
    let model = fit_kmeans(train, cells, rng)?;
    let tr = train.to_f64();
    let split = |fm: &FeatureMatrix| -> Vec<Vec<f64>> {
        let mut per_cell = vec![Vec::new(); cells];
        for row in fm.to_f64().chunks_exact(d) {
            let (cell, _) = model.assign(row);
            per_cell[cell].push(nearest_train(&tr, d, row));
        }
        per_cell
    };
    let gen_cells = split(gen);
    let test_cells = split(test);
    let n_test = test.n() as f64;

    let mut weighted = 0.0;
    let mut mass = 0.0;
    let mut cell_z = vec![None; cells];
    for c in 0..cells {
        if gen_cells[c].len() < CELL_FLOOR || test_cells[c].len() < CELL_FLOOR {
            continue;
        }
        let z = mann_whitney_z(&gen_cells[c], &test_cells[c]);
        let pi = test_cells[c].len() as f64 / n_test;
        weighted += pi * z;
        mass += pi;
        cell_z[c] = Some(z);
    }
    let cells_used = cell_z.iter().filter(|z| z.is_some()).count();
    if cells_used == 0 {
        return Err(Error::Numeric {
            metric: "ct",
            reason: alloc::format!("no cell holds {CELL_FLOOR} generated and {CELL_FLOOR} test points"),
        });
    }
    Ok(CtScore {
        value: weighted / mass,
        cell_z,
        cells_used,
    })
}

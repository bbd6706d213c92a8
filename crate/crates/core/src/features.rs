//! Embedding matrices: the common input of every metric.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `n x d` row-major embedding matrix with one id per row.
///
/// Values are single precision so that the binary interchange format
/// round-trips exactly; metrics widen to `f64` internally.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
    ids: Vec<String>,
    extractor_tag: String,
}

fn check_ids(ids: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(alloc::format!("duplicate row id `{id}`")));
        }
    }
    Ok(())
}

impl FeatureMatrix {
    pub fn new(d: usize, values: Vec<f32>, ids: Vec<String>, extractor_tag: impl Into<String>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::Empty("feature matrix"));
        }
        if d == 0 {
            return Err(Error::param("d", "feature dimension must be at least 1"));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        check_ids(&ids)?;
        Ok(Self {
            n,
            d,
            values,
            ids,
            extractor_tag: extractor_tag.into(),
        })
    }

    /// Builds a matrix from `f64` rows, rounding to single precision.
    pub fn from_rows(rows: &[Vec<f64>], ids: Vec<String>, extractor_tag: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.len() != ids.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: rows.len(),
            });
        }
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: r.len(),
                });
            }
            values.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(d, values, ids, extractor_tag)
    }

    /// Unlabelled matrix with ids `0..n`; convenient for synthetic data.
    pub fn from_rows_anon(rows: &[Vec<f64>]) -> Result<Self> {
        let ids = (0..rows.len()).map(|i| alloc::format!("{i}")).collect();
        Self::from_rows(rows, ids, "anon")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn extractor_tag(&self) -> &str {
        &self.extractor_tag
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    /// Row `i` widened to `f64`.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    /// All rows widened to `f64`, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Rows picked by index, in the given order. Duplicate picks get suffixed ids.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        let mut ids = Vec::with_capacity(rows.len());
        let mut seen = BTreeSet::new();
        for (k, &i) in rows.iter().enumerate() {
            values.extend_from_slice(self.row(i));
            if seen.insert(i) {
                ids.push(self.ids[i].clone());
            } else {
                ids.push(alloc::format!("{}#s{k}", self.ids[i]));
            }
        }
        Self::new(self.d, values, ids, self.extractor_tag.clone())
    }
}

/// Per-row class probabilities, rows summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbMatrix {
    k: usize,
    probs: Vec<f64>,
    ids: Vec<String>,
}

impl ClassProbMatrix {
    pub fn new(k: usize, probs: Vec<f64>, ids: Vec<String>) -> Result<Self> {
        let n = ids.len();
        if n == 0 || k == 0 {
            return Err(Error::Empty("class probability matrix"));
        }
        if probs.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                actual: probs.len(),
            });
        }
        for (i, row) in probs.chunks_exact(k).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInput(alloc::format!("row {i} has a negative or non-finite probability")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(alloc::format!("row {i} sums to {s}")));
            }
        }
        check_ids(&ids)?;
        Ok(Self { k, probs, ids })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn validates_shape_and_finiteness() {
        let ids = vec![String::from("a"), String::from("b")];
        assert!(FeatureMatrix::new(2, vec![0.0; 4], ids.clone(), "t").is_ok());
        assert!(FeatureMatrix::new(2, vec![0.0; 3], ids.clone(), "t").is_err());
        assert!(FeatureMatrix::new(2, vec![0.0, f32::NAN, 0.0, 0.0], ids.clone(), "t").is_err());
        let dup = vec![String::from("a"), String::from("a")];
        assert!(FeatureMatrix::new(1, vec![0.0; 2], dup, "t").is_err());
    }

    #[test]
    fn probs_must_sum_to_one() {
        let ids = vec![String::from("a")];
        assert!(ClassProbMatrix::new(2, vec![0.5, 0.5], ids.clone()).is_ok());
        assert!(ClassProbMatrix::new(2, vec![0.5, 0.6], ids.clone()).is_err());
        assert!(ClassProbMatrix::new(2, vec![1.5, -0.5], ids).is_err());
    }
}

//! Baseline-relative sensitivity tables.
//!
//! Rows are metrics, columns are perturbation conditions. Z-scores are taken
//! per metric across the conditions of one table.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::metrics::{Direction, MetricReport};
use crate::{Error, Result};

pub const ABS_DIFF_FLAG: &str = "abs-diff fallback";

/// Percent change from `baseline`, or `100 * |difference|`-style absolute
/// change (flagged) when the baseline is within 1e-9 of zero.
pub fn percent_change(baseline: f64, value: f64) -> Result<(f64, Option<&'static str>)> {
    if !baseline.is_finite() || !value.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite input ({baseline}, {value})")));
    }
    if baseline.abs() > 1e-9 {
        Ok((100.0 * (value - baseline) / baseline.abs(), None))
    } else {
        Ok((100.0 * (value - baseline), Some(ABS_DIFF_FLAG)))
    }
}

/// Standardises with the population std; rows with std below 1e-12 become zeros.
pub fn zscore_row(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if !(std >= 1e-12) {
        return alloc::vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SensitivityTable {
    pub metrics: Vec<String>,
    pub directions: Vec<Direction>,
    pub conditions: Vec<String>,
    pub baseline: Vec<f64>,
    /// `raw[metric][condition]`; the other grids share this shape.
    pub raw: Vec<Vec<f64>>,
    pub pct_change: Vec<Vec<f64>>,
    pub zscore: Vec<Vec<f64>>,
    pub flags: Vec<Vec<Vec<String>>>,
}

impl SensitivityTable {
    pub fn n_metrics(&self) -> usize {
        self.metrics.len()
    }

    pub fn n_conditions(&self) -> usize {
        self.conditions.len()
    }

    pub fn row(&self, metric: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == metric)
    }

    pub fn column(&self, condition: &str) -> Option<usize> {
        self.conditions.iter().position(|c| c == condition)
    }

    pub fn pct(&self, metric: &str, condition: &str) -> Option<f64> {
        Some(self.pct_change[self.row(metric)?][self.column(condition)?])
    }

    /// Copy with every number rounded to `digits` significant digits.
    pub fn rounded(&self, digits: usize) -> Self {
        let grid = |g: &Vec<Vec<f64>>| g.iter().map(|r| r.iter().map(|&v| round_sig(v, digits)).collect()).collect();
        Self {
            baseline: self.baseline.iter().map(|&v| round_sig(v, digits)).collect(),
            raw: grid(&self.raw),
            pct_change: grid(&self.pct_change),
            zscore: grid(&self.zscore),
            ..self.clone()
        }
    }
}

/// Rounds to `digits` significant decimal digits, ties to even.
pub fn round_sig(value: f64, digits: usize) -> f64 {
    if !value.is_finite() || value == 0.0 || digits == 0 {
        return value;
    }
    // exponent formatting rounds the exact binary value half-to-even
    format!("{:.*e}", digits - 1, value).parse().unwrap_or(value)
}

/// Assembles percent changes and per-metric z-scores for a set of conditions.
pub fn build_sensitivity(baseline: &MetricReport, conditions: &[(String, MetricReport)]) -> Result<SensitivityTable> {
    if conditions.is_empty() {
        return Err(Error::Empty("conditions"));
    }
    let names: Vec<String> = baseline.names().map(ToString::to_string).collect();
    let expected: BTreeSet<&str> = baseline.names().collect();
    let mut seen = BTreeSet::new();
    for (label, report) in conditions {
        if !seen.insert(label.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate condition `{label}`")));
        }
        let got: BTreeSet<&str> = report.names().collect();
        if let Some(m) = expected.difference(&got).next() {
            return Err(Error::InvalidInput(format!("condition `{label}` lacks metric `{m}`")));
        }
        if let Some(m) = got.difference(&expected).next() {
            return Err(Error::InvalidInput(format!("condition `{label}` has metric `{m}` missing from the baseline")));
        }
    }
    let mut table = SensitivityTable {
        metrics: names.clone(),
        directions: baseline.entries.iter().map(|e| e.direction).collect(),
        conditions: conditions.iter().map(|(l, _)| l.clone()).collect(),
        baseline: baseline.entries.iter().map(|e| e.value).collect(),
        raw: Vec::new(),
        pct_change: Vec::new(),
        zscore: Vec::new(),
        flags: Vec::new(),
    };
    for (name, &base) in names.iter().zip(&table.baseline) {
        let mut raw = Vec::with_capacity(conditions.len());
        let mut pct = Vec::with_capacity(conditions.len());
        let mut flags = Vec::with_capacity(conditions.len());
        for (label, report) in conditions {
            let v = report.value(name).expect("metric sets checked above");
            let (p, flag) = percent_change(base, v).map_err(|_| Error::InvalidInput(format!("metric `{name}` is non-finite in `{label}`")))?;
            raw.push(v);
            pct.push(p);
            flags.push(flag.into_iter().map(String::from).collect());
        }
        table.zscore.push(zscore_row(&pct));
        table.raw.push(raw);
        table.pct_change.push(pct);
        table.flags.push(flags);
    }
    Ok(table)
}

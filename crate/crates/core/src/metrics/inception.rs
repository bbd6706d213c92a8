use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::stats::{mean, pop_std};
use crate::{ClassProbMatrix, Error, Result};

/// Inception score `exp(E_x KL(p(y|x) || p(y)))` per split; returns the
/// mean and population std over `splits` contiguous, near-equal splits.
pub fn inception_score(probs: &ClassProbMatrix, splits: usize) -> Result<(f64, f64)> {
    let n = probs.n();
    if splits == 0 {
        return Err(Error::param("splits", "must be at least 1"));
    }
    if n < splits {
        return Err(Error::param("splits", alloc::format!("{splits} splits but only {n} rows")));
    }
    let k = probs.k();
    let mut scores = Vec::with_capacity(splits);
    let (base, extra) = (n / splits, n % splits);
    let mut start = 0;
    for s in 0..splits {
        let len = base + usize::from(s < extra);
        let rows = start..start + len;
        start += len;
        let mut marginal = alloc::vec![0.0; k];
        for i in rows.clone() {
            for (m, p) in marginal.iter_mut().zip(probs.row(i)) {
                *m += p;
            }
        }
        marginal.iter_mut().for_each(|m| *m /= len as f64);
        let kl_sum: f64 = rows
            .map(|i| {
                probs
                    .row(i)
                    .iter()
                    .zip(&marginal)
                    .filter(|(p, _)| **p > 0.0)
                    .map(|(p, m)| p * (p / m).ln())
                    .sum::<f64>()
            })
            .sum();
        scores.push((kl_sum / len as f64).exp());
    }
    Ok((mean(&scores), pop_std(&scores)))
}

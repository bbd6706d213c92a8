//! Small numeric helpers shared across modules.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population (ddof = 0) standard deviation.
pub(crate) fn pop_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Median with the two middle values averaged for even lengths.
pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Percentile of already sorted data, linear interpolation between ranks.
pub(crate) fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Splits `n` items by `fractions`: each share is `floor(f * n)` and the
/// leftover goes to the largest fraction (first listed on ties).
pub(crate) fn apportion(fractions: &[f64], n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = fractions
        .iter()
        .map(|&f| (f * n as f64 + 1e-9).floor() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    let mut largest = 0;
    for (i, &f) in fractions.iter().enumerate() {
        if f > fractions[largest] {
            largest = i;
        }
    }
    if assigned <= n {
        sizes[largest] += n - assigned;
    } else {
        // only reachable through the 1e-9 slack; take the excess back from the largest shares
        let mut excess = assigned - n;
        while excess > 0 {
            let i = (0..sizes.len()).max_by_key(|&i| (sizes[i], usize::MAX - i)).unwrap();
            sizes[i] -= 1;
            excess -= 1;
        }
    }
    sizes
}

/// Checks that `fractions` are non-negative and sum to one within 1e-9.
pub(crate) fn check_fractions(name: &'static str, fractions: &[f64]) -> crate::Result<()> {
    if fractions.is_empty() {
        return Err(crate::Error::param(name, "no fractions given"));
    }
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(crate::Error::param(name, "fractions must be finite and non-negative"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(crate::Error::param(
            name,
            alloc::format!("fractions sum to {total}, expected 1"),
        ));
    }
    Ok(())
}

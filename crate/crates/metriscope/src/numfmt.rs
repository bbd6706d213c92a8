//! Decimal rendering shared by every text output.

use metriscope_core::analysis::round_sig;

pub const SIG_DIGITS: usize = 9;

/// Nine significant digits, ties to even, shortest text for the rounded value.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let r = round_sig(v, SIG_DIGITS);
    let a = r.abs();
    if r == 0.0 || (1e-5..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

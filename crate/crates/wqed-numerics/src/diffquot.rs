//! Difference quotients that stay accurate as the two points merge.

use crate::C64;

/// `10⁻⁶·max(|a|, |b|, scale)`.
pub fn default_threshold(a: C64, b: C64, scale: f64) -> f64 {
    1e-6 * a.norm().max(b.norm()).max(scale)
}

/// `(f(a) − f(b)) / (a − b)`, switching to a derivative form when the
/// points are closer than `threshold`.
///
/// The close-point branch is Simpson's rule for `∫_b^a f'`, i.e.
/// `f'(m)` plus its second-order correction, which agrees with the exact
/// quotient to `O(|a − b|⁴)`.
pub fn safe_difference_quotient<F, D>(f: F, df: D, a: C64, b: C64, threshold: f64) -> C64
where
    F: Fn(C64) -> C64,
    D: Fn(C64) -> C64,
{
    let d = a - b;
    if d.norm() > threshold {
        (f(a) - f(b)) / d
    } else if d.norm() == 0.0 {
        df(a)
    } else {
        let m = (a + b) * 0.5;
        (df(a) + df(m) * 4.0 + df(b)) / 6.0
    }
}

//! Complex Lambert W on every branch.

use std::f64::consts::{E, PI};

use crate::{NumericsError, Result, C64};

const MAX_ITER: usize = 100;

/// `W_n(z)`, the solution of `w e^w = z` on branch `n`.
///
/// Branch cuts follow the usual counterclockwise convention: points on the
/// negative real axis belong to the branch approached from above, so
/// `W_{-1}` is real on `[-1/e, 0)` and `W_0` is real on `[-1/e, ∞)`.
pub fn lambert_w(z: C64, n: i64) -> Result<C64> {
    if z == C64::new(0.0, 0.0) {
        if n == 0 {
            return Ok(z);
        }
        return Err(NumericsError::InvalidGrid(format!("W_{n}(0) is not finite")));
    }
    let z = canonical(z);
    let mut last = f64::NAN;
    for seed in seeds(z, n) {
        match halley(z, seed) {
            Ok(w) if branch_of(w, z) == Some(n) => return Ok(w),
            Ok(_) => continue,
            Err(NumericsError::NoConvergence { last_change, .. }) => last = last_change,
            Err(e) => return Err(e),
        }
    }
    Err(NumericsError::NoConvergence {
        what: "Lambert W",
        iterations: MAX_ITER,
        last_change: last,
    })
}

/// Signed zero on the negative real axis is mapped to the upper side.
fn canonical(z: C64) -> C64 {
    if z.im == 0.0 {
        C64::new(z.re, 0.0)
    } else {
        z
    }
}

fn seeds(z: C64, n: i64) -> Vec<C64> {
    let two_pi_i = C64::new(0.0, 2.0 * PI * n as f64);
    let l1 = z.ln() + two_pi_i;
    let asymptotic = if l1.norm() > 0.0 {
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    } else {
        C64::new(0.0, 0.0)
    };
    let mut out = Vec::new();
    // Near the branch point -1/e three sheets meet.
    let p2 = 2.0 * (E * z + 1.0);
    let p = p2.sqrt();
    let near_branch = p2.norm() < 0.5;
    let branch_series = |sign: f64| {
        let q = p * sign;
        C64::new(-1.0, 0.0) + q - q * q / 3.0 + q * q * q * (11.0 / 72.0)
    };
    match n {
        0 => {
            if near_branch {
                out.push(branch_series(1.0));
            }
            if z.norm() < 0.5 {
                out.push(z - z * z + 1.5 * z * z * z);
            }
            let lp = (z + 1.0).ln();
            out.push(lp * (1.0 - (lp + 1.0).ln() / (lp + 2.0)));
            if z.norm() > 2.0 {
                out.push(asymptotic);
            }
        }
        -1 | 1 => {
            let upper = z.im >= 0.0;
            if near_branch && ((n == -1) == upper) {
                out.push(branch_series(-1.0));
            }
            out.push(asymptotic);
            if near_branch {
                out.push(branch_series(-1.0));
                out.push(branch_series(1.0));
            }
        }
        _ => out.push(asymptotic),
    }
    out.push(asymptotic);
    out.push(asymptotic + C64::new(0.0, PI.copysign(n as f64 + 0.5)));
    out
}

fn halley(z: C64, mut w: C64) -> Result<C64> {
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1.norm() < 1e-300 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        w -= step;
        change = step.norm();
        if change <= 1e-15 * (1.0 + w.norm()) {
            break;
        }
    }
    let residual = (w * w.exp() - z).norm();
    if residual <= 1e-12 * z.norm().max(1.0) {
        Ok(w)
    } else {
        Err(NumericsError::NoConvergence {
            what: "Lambert W Halley iteration",
            iterations: MAX_ITER,
            last_change: change,
        })
    }
}

/// Branch index from `W_n(z) + ln W_n(z) = ln z + 2πi n`.
fn branch_of(w: C64, z: C64) -> Option<i64> {
    if w == C64::new(0.0, 0.0) {
        return Some(0);
    }
    // Real values on the cut: W_0 >= -1, W_{-1} <= -1 for z in [-1/e, 0).
    if w.im == 0.0 || w.im.abs() < 1e-14 * w.norm().max(1.0) && z.im == 0.0 {
        if z.re < 0.0 && z.re >= -1.0 / E - 1e-12 {
            return Some(if w.re >= -1.0 { 0 } else { -1 });
        }
        if z.re > 0.0 {
            return Some(0);
        }
    }
    let k = (w + w.ln() - z.ln()).im / (2.0 * PI);
    let r = k.round();
    if (k - r).abs() < 1e-6 {
        Some(r as i64)
    } else {
        None
    }
}

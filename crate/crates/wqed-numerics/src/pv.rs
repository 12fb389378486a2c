//! Cauchy principal values on uniform grids by pole subtraction.

use crate::{grid::MomentumGrid, NumericsError, Result, C64};

/// A kernel `f(k) / (k - pole)` stored as its regular numerator.
#[derive(Debug, Clone, PartialEq)]
pub struct PVKernelSample {
    pub pole_location: f64,
    pub regular_part: Vec<C64>,
}

impl PVKernelSample {
    pub fn integrate(&self, grid: &MomentumGrid) -> Result<C64> {
        pv_integrate(&self.regular_part, self.pole_location, grid)
    }
}

/// Interpolating stencil width for the near-pole series.
const STENCIL: usize = 6;

/// `P ∫ f(k) / (k - pole) dk` over the grid.
///
/// The subtracted integrand `(f(k) - f(pole)) / (k - pole)` is integrated
/// with the grid weights. `f(pole)` and the subtracted integrand at nodes
/// within one spacing of the pole come from a local degree-5 interpolant
/// expanded about the pole.
pub fn pv_integrate(values: &[C64], pole: f64, grid: &MomentumGrid) -> Result<C64> {
    if values.len() != grid.len() {
        return Err(NumericsError::ShapeMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let h = grid.spacing();
    let k_max = grid.k_max();
    if !(pole.abs() < k_max - 2.0 * h) {
        return Err(NumericsError::PoleOutOfRange {
            pole,
            k_max,
            margin: 2.0 * h,
        });
    }
    let nodes = grid.nodes();
    let n = nodes.len();
    let width = STENCIL.min(n);
    let left = ((pole + k_max) / h).floor() as isize - (width as isize / 2 - 1);
    let start = left.clamp(0, (n - width) as isize) as usize;

    let taylor = local_taylor(&nodes[start..start + width], &values[start..start + width], pole, h);
    let f_pole = taylor[0];

    let mut sum = C64::new(0.0, 0.0);
    for (j, (&k, &w)) in nodes.iter().zip(grid.weights()).enumerate() {
        let d = k - pole;
        let q = if d.abs() < h && (start..start + width).contains(&j) {
            let s = d / h;
            let mut acc = C64::new(0.0, 0.0);
            for c in taylor[1..].iter().rev() {
                acc = acc * s + c;
            }
            acc / h
        } else {
            (values[j] - f_pole) / d
        };
        sum += q * w;
    }
    Ok(sum + f_pole * ((k_max - pole) / (k_max + pole)).ln())
}

/// Taylor coefficients in `s = (k - pole) / h` of the polynomial through
/// the given points.
fn local_taylor(xs: &[f64], ys: &[C64], pole: f64, h: f64) -> Vec<C64> {
    let m = xs.len();
    let s: Vec<f64> = xs.iter().map(|x| (x - pole) / h).collect();
    let mut dd: Vec<C64> = ys.to_vec();
    for level in 1..m {
        for i in (level..m).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (s[i] - s[i - level]);
        }
    }
    // Newton form to monomial form by nested multiplication.
    let mut coeffs = vec![C64::new(0.0, 0.0); m];
    for i in (0..m).rev() {
        // coeffs <- coeffs * (s - s_i) + dd_i
        for j in (1..m).rev() {
            coeffs[j] = coeffs[j - 1] - coeffs[j] * s[i];
        }
        coeffs[0] = -coeffs[0] * s[i] + dd[i];
    }
    coeffs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(g: &MomentumGrid) -> Vec<C64> {
        vec![C64::new(1.0, 0.0); g.len()]
    }

    #[test]
    fn constant_numerator() {
        let g = MomentumGrid::uniform(1.0, 201).unwrap();
        let v = pv_integrate(&ones(&g), 0.5, &g).unwrap();
        assert!((v.re + 3f64.ln()).abs() < 1e-12);
        let z = pv_integrate(&ones(&g), 0.0, &g).unwrap();
        assert!(z.norm() < 1e-12);
    }

    #[test]
    fn pole_near_edge_is_rejected() {
        let g = MomentumGrid::uniform(1.0, 21).unwrap();
        assert!(matches!(
            pv_integrate(&ones(&g), 0.85, &g),
            Err(NumericsError::PoleOutOfRange { .. })
        ));
    }

    #[test]
    fn taylor_reproduces_polynomial() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys: Vec<C64> = xs
            .iter()
            .map(|&x: &f64| C64::new(1.0 - 2.0 * x + 0.5 * x.powi(3), x))
            .collect();
        let c = local_taylor(&xs, &ys, 2.5, 1.0);
        // p(2.5 + s) at s = 0 and its first derivative
        assert!((c[0] - C64::new(1.0 - 5.0 + 0.5 * 15.625, 2.5)).norm() < 1e-12);
        assert!((c[1] - C64::new(-2.0 + 1.5 * 6.25, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn off_node_pole_with_smooth_numerator() {
        let g = MomentumGrid::uniform(20.0, 4001).unwrap();
        let f: Vec<C64> = g.nodes().iter().map(|&k| C64::new(1.0 / (k * k + 1.0), 0.0)).collect();
        let p = 0.3;
        // closed form of P∫_{-L}^{L} dk / ((k^2+1)(k-p))
        let l: f64 = 20.0;
        let exact = (((l - p) / (l + p)).ln() - 2.0 * p * l.atan()) / (p * p + 1.0);
        let v = pv_integrate(&f, p, &g).unwrap();
        assert!((v.re - exact).abs() < 1e-8, "{} vs {}", v.re, exact);
    }
}

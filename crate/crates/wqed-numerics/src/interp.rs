//! Piecewise-cubic interpolation on uniform axes.

use crate::C64;

/// A uniform axis `start + i·step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformAxis {
    pub fn new(start: f64, stop: f64, len: usize) -> Self {
        assert!(len >= 2, "axis needs at least two nodes");
        Self {
            start,
            step: (stop - start) / (len - 1) as f64,
            len,
        }
    }

    pub fn stop(&self) -> f64 {
        self.start + self.step * (self.len - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.len {
            self.stop()
        } else {
            self.start + self.step * i as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = 1e-12 * self.step.abs();
        x >= self.start - tol && x <= self.stop() + tol
    }

    /// Cell index `i` with `x ∈ [x_i, x_{i+1}]` and the local coordinate.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let pos = (x - self.start) / self.step;
        let i = (pos.floor().max(0.0) as usize).min(self.len - 2);
        (i, (pos - i as f64).clamp(0.0, 1.0))
    }
}

/// Cubic Hermite basis `[h00, h10, h01, h11]` at local coordinate `t`.
pub fn hermite_basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    ]
}

/// Four-point Lagrange weights on nodes `-1, 0, 1, 2` at local coordinate `t`.
pub fn lagrange4(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Stencil start and weights for four-point Lagrange interpolation,
/// shifted inward at the edges.
pub fn lagrange_stencil(axis: &UniformAxis, x: f64) -> (usize, [f64; 4]) {
    let pos = (x - axis.start) / axis.step;
    let max_start = axis.len.saturating_sub(4) as f64;
    let start = (pos.floor() - 1.0).clamp(0.0, max_start);
    (start as usize, lagrange4(pos - start - 1.0))
}

/// Bicubic Lagrange interpolation of row-major data on `rows × cols` axes.
pub fn bicubic_lagrange(data: &[C64], rows: &UniformAxis, cols: &UniformAxis, r: f64, c: f64) -> C64 {
    let (r0, wr) = lagrange_stencil(rows, r);
    let (c0, wc) = lagrange_stencil(cols, c);
    let mut acc = C64::new(0.0, 0.0);
    for (a, &w_r) in wr.iter().enumerate() {
        let row = &data[(r0 + a) * cols.len..];
        let mut inner = C64::new(0.0, 0.0);
        for (b, &w_c) in wc.iter().enumerate() {
            inner += row[c0 + b] * w_c;
        }
        acc += inner * w_r;
    }
    acc
}

//! Dense complex linear algebra on top of `faer`, always sequential so that
//! results do not depend on the thread pool.

use crate::C64;
pub use faer::Mat;
use faer::{linalg::solvers::PartialPivLu, Accum, Par};

/// LU factorization with partial pivoting plus a crude conditioning probe.
pub struct Lu {
    inner: PartialPivLu<C64>,
    pivot_ratio: f64,
}

impl Lu {
    pub fn new(a: &Mat<C64>) -> Self {
        let inner = a.partial_piv_lu();
        let u = inner.U();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..u.nrows().min(u.ncols()) {
            let d = u[(i, i)].norm();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let pivot_ratio = if hi > 0.0 && lo.is_finite() { lo / hi } else { 0.0 };
        Self { inner, pivot_ratio }
    }

    /// Smallest over largest pivot modulus of the `U` factor.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve(&self, rhs: &Mat<C64>) -> Mat<C64> {
        use faer::linalg::solvers::Solve;
        self.inner.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &[C64]) -> Vec<C64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// `a * b`.
pub fn matmul(a: &Mat<C64>, b: &Mat<C64>) -> Mat<C64> {
    let mut c = Mat::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(&mut c, Accum::Replace, a, b, C64::new(1.0, 0.0), Par::Seq);
    c
}

/// Column-major copy into a matrix from a row-major slice.
pub fn from_row_major(rows: usize, cols: usize, data: &[C64]) -> Mat<C64> {
    assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

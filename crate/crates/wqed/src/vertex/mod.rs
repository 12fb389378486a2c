//! Integral equations for the connected vertex functions.
//!
//! The one-photon vertex with the coupling factors stripped satisfies
//!
//! `F(k′,k;E) = D(E−k′−k) + ∫dq ρ(q) G(E−q) D(E−k′−q) F(q,k;E)`,
//!
//! with `D(x) = 1/(x + i0)`. Every singularity of the integrand in `q` lies
//! on or above the real axis, so the integration path `[−K, K]` is pushed
//! down to `Im q = −δ` (closed by two short vertical caps at `±K`). On that
//! path the integrand is smooth, the trapezoid rule converges
//! exponentially, and the values at real momenta follow from the
//! Nyström extension
//!
//! `F_reg(k′) = Σ_j c_j F(z_j) / (E − k′ − z_j)`,  `c_j = w_j ρ(z_j) G(E − z_j)`.
//!
//! `F_reg` is the smooth part; the connected vertex is `P/(E−k′−k) + F_reg`.

mod contour;
mod family;
mod pair;
mod table;

pub use contour::{Contour, ContourColumn};
pub use family::{solve_f11_family, EnergyFamilyTable, FamilyOptions};
pub use pair::{solve_f12_slice, PairSolver, SliceOptions, TwoPhotonVertexSlice};
pub use table::{solve_f11, solve_f11_at, solve_f11_column, VertexTable};

use serde::{Deserialize, Serialize};

/// Which vertex function feeds the scattering amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexMode {
    Exact,
    Markovian,
    QuasiMarkovian,
}

impl VertexMode {
    /// Whether the smooth part of the vertex is solved for or dropped.
    pub fn solves_kernel(self) -> bool {
        matches!(self, VertexMode::Exact)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VertexMode::Exact => "exact",
            VertexMode::Markovian => "markovian",
            VertexMode::QuasiMarkovian => "quasi_markovian",
        }
    }
}

/// Discretization controls for the contour solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Depth `δ` of the shifted path; `None` picks `min(0.5, 2/R, K/4)`.
    pub contour_depth: Option<f64>,
    /// Gauss–Legendre points on each vertical cap.
    pub cap_points: usize,
    /// Re-solve on a grid with half the spacing and report `GridTooCoarse`
    /// when the smooth part moves by more than `refinement_tolerance`.
    pub check_refinement: bool,
    pub refinement_tolerance: f64,
    /// Smallest acceptable ratio of LU pivot moduli.
    pub min_pivot_ratio: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            contour_depth: None,
            cap_points: 8,
            check_refinement: false,
            refinement_tolerance: 1e-3,
            min_pivot_ratio: 1e-13,
        }
    }
}

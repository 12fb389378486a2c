use rayon::prelude::*;
use wqed_numerics::{MomentumGrid, PVKernelSample, C64};

use super::{
    contour::{Contour, ContourColumn, System},
    SolverOptions, VertexMode,
};
use crate::{error::VertexError, model::ModelParams};

/// Connected one-photon vertex `F̄(k′,k;ε)` on a real grid.
///
/// Stored as the smooth part `F_reg` for every incoming node `k`; the
/// Cauchy factor `P 1/(ε−k′−k)` is kept symbolic and exposed through
/// [`VertexTable::pv_sample`].
#[derive(Debug, Clone)]
pub struct VertexTable {
    grid: MomentumGrid,
    energy: C64,
    mode: VertexMode,
    contour: Option<Contour>,
    columns: Vec<ContourColumn>,
    regular: Vec<C64>,
}

impl VertexTable {
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn energy(&self) -> f64 {
        self.energy.re
    }

    pub fn complex_energy(&self) -> C64 {
        self.energy
    }

    pub fn mode(&self) -> VertexMode {
        self.mode
    }

    pub fn contour(&self) -> Option<&Contour> {
        self.contour.as_ref()
    }

    /// Smooth part at grid nodes `(k′_i, k_j)`.
    pub fn regular(&self, i: usize, j: usize) -> C64 {
        self.regular[i * self.grid.len() + j]
    }

    /// Row-major `F_reg(k′_i, k_j)`.
    pub fn regular_matrix(&self) -> &[C64] {
        &self.regular
    }

    /// Connected vertex at grid nodes, `None` exactly on the pole.
    pub fn value(&self, i: usize, j: usize) -> Option<C64> {
        let x = self.grid.nodes();
        let den = self.energy - x[i] - x[j];
        if den.norm() < 1e-12 * (1.0 + self.grid.k_max()) {
            return None;
        }
        Some(den.inv() + self.regular(i, j))
    }

    /// Solved contour column for incoming node `j`; `None` when the mode
    /// has no kernel.
    pub fn column(&self, j: usize) -> Option<&ContourColumn> {
        self.columns.get(j)
    }

    /// Smooth part at an arbitrary outgoing momentum for incoming node `j`.
    pub fn regular_at(&self, k_out: f64, j: usize) -> C64 {
        match (&self.contour, self.columns.get(j)) {
            (Some(c), Some(col)) => col.regular_at(c, C64::new(k_out, 0.0)),
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Column `j` as a principal-value kernel in `k′`:
    /// `F̄(k′) = P 1/(ε−k′−k_j) + F_reg = −regular_part(k′)/(k′ − p)`.
    pub fn pv_sample(&self, j: usize) -> PVKernelSample {
        let x = self.grid.nodes();
        let n = self.grid.len();
        let pole = self.energy.re - x[j];
        let regular_part = (0..n)
            .map(|i| C64::new(-1.0, 0.0) + self.regular(i, j) * (x[i] - pole))
            .collect();
        PVKernelSample {
            pole_location: pole,
            regular_part,
        }
    }
}

/// Solve for the connected one-photon vertex at real energy `eps`.
pub fn solve_f11(
    params: &ModelParams,
    eps: f64,
    grid: &MomentumGrid,
    mode: VertexMode,
) -> Result<VertexTable, VertexError> {
    solve_f11_at(params, C64::new(eps, 0.0), grid, mode, &SolverOptions::default())
}

/// Same as [`solve_f11`] with a complex energy and explicit options.
pub fn solve_f11_at(
    params: &ModelParams,
    energy: C64,
    grid: &MomentumGrid,
    mode: VertexMode,
    options: &SolverOptions,
) -> Result<VertexTable, VertexError> {
    let n = grid.len();
    if !mode.solves_kernel() || params.gamma() == 0.0 {
        return Ok(VertexTable {
            grid: grid.clone(),
            energy,
            mode,
            contour: None,
            columns: Vec::new(),
            regular: vec![C64::new(0.0, 0.0); n * n],
        });
    }
    let contour = Contour::for_params(params, grid, options);
    let system = System::assemble(params, &contour, energy, false, options)?;
    let incoming: Vec<C64> = grid.nodes().iter().map(|&k| C64::new(k, 0.0)).collect();
    let columns = system.solve(&contour, &incoming);
    let mut regular = vec![C64::new(0.0, 0.0); n * n];
    regular.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let kp = C64::new(grid.nodes()[i], 0.0);
        for (j, v) in row.iter_mut().enumerate() {
            *v = columns[j].regular_at(&contour, kp);
        }
    });

    if options.check_refinement {
        check_refinement(params, energy, grid, &contour, &columns, options)?;
    }

    Ok(VertexTable {
        grid: grid.clone(),
        energy,
        mode,
        contour: Some(contour),
        columns,
        regular,
    })
}

fn check_refinement(
    params: &ModelParams,
    energy: C64,
    grid: &MomentumGrid,
    contour: &Contour,
    columns: &[ContourColumn],
    options: &SolverOptions,
) -> Result<(), VertexError> {
    let fine_grid = grid.refined();
    let fine = Contour::new(&fine_grid, contour.depth(), contour.cap_points());
    let probe = grid.center();
    let k_in = C64::new(grid.nodes()[probe], 0.0);
    let system = System::assemble(params, &fine, energy, false, options)?;
    let col = system.solve(&fine, &[k_in]).remove(0);
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &x in grid.nodes() {
        let kp = C64::new(x, 0.0);
        let a = columns[probe].regular_at(contour, kp);
        let b = col.regular_at(&fine, kp);
        diff = diff.max((a - b).norm());
        scale = scale.max(b.norm());
    }
    let relative = diff / scale.max(f64::MIN_POSITIVE);
    if relative > options.refinement_tolerance {
        return Err(VertexError::GridTooCoarse {
            energy: energy.re,
            relative_change: relative,
        });
    }
    Ok(())
}

/// Column with incoming momentum 0 at complex energy, solved on `contour`.
pub fn solve_f11_column(
    params: &ModelParams,
    energy: C64,
    contour: &Contour,
    derivative: bool,
    options: &SolverOptions,
) -> Result<ContourColumn, VertexError> {
    let system = System::assemble(params, contour, energy, derivative, options)?;
    Ok(system.solve(contour, &[C64::new(0.0, 0.0)]).remove(0))
}

use rayon::prelude::*;
use wqed_numerics::{
    interp::{hermite_basis, UniformAxis},
    MomentumGrid, C64,
};

use super::{
    contour::{Contour, ContourColumn, System},
    SolverOptions, VertexMode,
};
use crate::{error::VertexError, model::ModelParams};

/// Controls for [`solve_f11_family`].
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOptions {
    pub solver: SolverOptions,
    /// Grid defining the integration path; `None` uses the table grid.
    pub contour_grid: Option<MomentumGrid>,
    /// Bisect an energy interval while the Hermite prediction at its
    /// midpoint misses the direct solve by more than this (relative to
    /// the column's sup norm). `None` keeps the supplied nodes.
    pub refine_tolerance: Option<f64>,
    /// Intervals narrower than this are never split.
    pub min_step: f64,
    pub max_nodes: usize,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            contour_grid: None,
            refine_tolerance: Some(2.5e-5),
            min_step: 1e-3,
            max_nodes: 20_000,
        }
    }
}

/// `F_reg(k′, 0; E)` tabulated over outgoing momentum and energy.
///
/// Exact-mode values carry analytic first derivatives in both variables,
/// so lookups are bicubic Hermite. The energy nodes need not be uniform.
/// Other modes are identically zero.
#[derive(Debug, Clone)]
pub struct EnergyFamilyTable {
    mode: VertexMode,
    momenta: UniformAxis,
    energies: Vec<f64>,
    contour: Option<Contour>,
    columns: Vec<ContourColumn>,
    /// `[f, ∂_k f, ∂_E f, ∂_k∂_E f]` at `(energy i, momentum j)`.
    table: Vec<[C64; 4]>,
}

impl EnergyFamilyTable {
    pub fn mode(&self) -> VertexMode {
        self.mode
    }

    pub fn energy_nodes(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy_range(&self) -> (f64, f64) {
        (self.energies[0], self.energies[self.energies.len() - 1])
    }

    pub fn momentum_axis(&self) -> UniformAxis {
        self.momenta
    }

    /// Interpolation order in each variable.
    pub fn interpolation_order(&self) -> usize {
        3
    }

    pub fn contour(&self) -> Option<&Contour> {
        self.contour.as_ref()
    }

    pub fn covers(&self, k_out: f64, energy: f64) -> bool {
        let (lo, hi) = self.energy_range();
        let tol = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
        energy >= lo - tol && energy <= hi + tol && self.momenta.contains(k_out)
    }

    /// Stored node value at energy index `i`, momentum index `j`.
    pub fn node_value(&self, i: usize, j: usize) -> C64 {
        if self.table.is_empty() {
            return C64::new(0.0, 0.0);
        }
        self.table[i * self.momenta.len + j][0]
    }

    /// Smooth part evaluated without interpolation at energy node `i`.
    pub fn regular_direct(&self, k_out: C64, i: usize) -> C64 {
        match &self.contour {
            Some(c) => self.columns[i].regular_at(c, k_out),
            None => C64::new(0.0, 0.0),
        }
    }

    /// Interpolated smooth part `F_reg(k′, 0; E)`.
    ///
    /// Arguments outside the tabulated box are clamped to its edge.
    pub fn regular(&self, k_out: f64, energy: f64) -> C64 {
        if self.table.is_empty() {
            return C64::new(0.0, 0.0);
        }
        let nk = self.momenta.len;
        let (jk, tk) = self.momenta.locate(k_out);
        let hk = hermite_basis(tk);
        let sk = self.momenta.step;
        let wk = [(jk, hk[0], hk[1] * sk), (jk + 1, hk[2], hk[3] * sk)];
        if self.energies.len() == 1 {
            return wk
                .iter()
                .map(|&(j, a, b)| self.table[j][0] * a + self.table[j][1] * b)
                .sum();
        }
        let (ie, te, se) = locate(&self.energies, energy);
        let he = hermite_basis(te);
        let we = [(ie, he[0], he[1] * se), (ie + 1, he[2], he[3] * se)];
        let mut acc = C64::new(0.0, 0.0);
        for &(i, ea, eb) in &we {
            for &(j, ka, kb) in &wk {
                let v = &self.table[i * nk + j];
                acc += v[0] * (ka * ea) + v[1] * (kb * ea) + v[2] * (ka * eb) + v[3] * (kb * eb);
            }
        }
        acc
    }

    /// Connected vertex `P 1/(E−k′) + F_reg(k′,0;E)`; `None` on the pole.
    pub fn connected(&self, k_out: f64, energy: f64) -> Option<C64> {
        let d = energy - k_out;
        if d.abs() < 1e-12 {
            return None;
        }
        Some(C64::new(1.0 / d, 0.0) + self.regular(k_out, energy))
    }
}

/// Interval index, local coordinate and width for sorted `nodes`.
fn locate(nodes: &[f64], x: f64) -> (usize, f64, f64) {
    let n = nodes.len();
    let i = nodes.partition_point(|&e| e <= x).saturating_sub(1).min(n - 2);
    let s = nodes[i + 1] - nodes[i];
    (i, ((x - nodes[i]) / s).clamp(0.0, 1.0), s)
}

/// Solve the incoming-momentum-0 column over an energy range.
///
/// `energy_grid` gives the initial, strictly increasing nodes; with
/// refinement enabled, intervals are bisected until the held-out midpoint
/// error drops below the tolerance. Values are tabulated at the nodes of
/// `grid`.
pub fn solve_f11_family(
    params: &ModelParams,
    energy_grid: &[f64],
    grid: &MomentumGrid,
    mode: VertexMode,
    options: &FamilyOptions,
) -> Result<EnergyFamilyTable, VertexError> {
    if energy_grid.is_empty() || energy_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(VertexError::Unsupported(
            "energy grid must be nonempty and strictly increasing".into(),
        ));
    }
    let k = grid.k_max();
    let momenta = UniformAxis::new(-k, k, grid.len());
    if !mode.solves_kernel() || params.gamma() == 0.0 {
        return Ok(EnergyFamilyTable {
            mode,
            momenta,
            energies: energy_grid.to_vec(),
            contour: None,
            columns: Vec::new(),
            table: Vec::new(),
        });
    }
    let contour = Contour::for_params(params, options.contour_grid.as_ref().unwrap_or(grid), &options.solver);
    let derivative = energy_grid.len() > 1;
    let kp: Vec<C64> = grid.nodes().iter().map(|&x| C64::new(x, 0.0)).collect();
    let node = |e: f64| -> Result<(f64, ContourColumn, Vec<[C64; 4]>), VertexError> {
        let col = System::assemble(params, &contour, C64::new(e, 0.0), derivative, &options.solver)
            .map(|s| s.solve(&contour, &[C64::new(0.0, 0.0)]).remove(0))
            .map_err(|err| VertexError::AtEnergy {
                energy: e,
                source: Box::new(err),
            })?;
        let row = kp.iter().map(|&x| col.regular_derivatives(&contour, x)).collect();
        Ok((e, col, row))
    };
    let mut nodes: Vec<(f64, ContourColumn, Vec<[C64; 4]>)> =
        energy_grid.par_iter().map(|&e| node(e)).collect::<Result<_, _>>()?;

    if let (Some(tol), true) = (options.refine_tolerance, derivative) {
        let mut pending: Vec<usize> = (0..nodes.len() - 1).collect();
        while !pending.is_empty() {
            if nodes.len() + pending.len() > options.max_nodes {
                return Err(VertexError::Unsupported(format!(
                    "energy refinement exceeded {} nodes",
                    options.max_nodes
                )));
            }
            let mids: Vec<_> = pending
                .par_iter()
                .map(|&i| node(0.5 * (nodes[i].0 + nodes[i + 1].0)))
                .collect::<Result<_, _>>()?;
            let mut split = Vec::new();
            for (&i, mid) in pending.iter().zip(mids) {
                let s = nodes[i + 1].0 - nodes[i].0;
                let h = hermite_basis(0.5);
                let (a, b) = (&nodes[i].2, &nodes[i + 1].2);
                let mut err: f64 = 0.0;
                let mut scale: f64 = 1e-8;
                for j in 0..kp.len() {
                    let pred = a[j][0] * h[0] + a[j][2] * (h[1] * s) + b[j][0] * h[2] + b[j][2] * (h[3] * s);
                    err = err.max((pred - mid.2[j][0]).norm());
                    scale = scale.max(mid.2[j][0].norm());
                }
                if err > tol * scale && 0.5 * s >= options.min_step {
                    split.push((i, mid));
                }
            }
            // Insert from the right so earlier indices stay valid.
            split.sort_by_key(|x| std::cmp::Reverse(x.0));
            let mut next = Vec::new();
            for (i, mid) in split {
                nodes.insert(i + 1, mid);
                for p in next.iter_mut() {
                    *p += 1;
                }
                next.push(i);
                next.push(i + 1);
            }
            next.sort_unstable();
            pending = next;
        }
    }

    let mut energies = Vec::with_capacity(nodes.len());
    let mut columns = Vec::with_capacity(nodes.len());
    let mut table = Vec::with_capacity(nodes.len() * kp.len());
    for (e, col, row) in nodes {
        energies.push(e);
        columns.push(col);
        table.extend(row);
    }
    Ok(EnergyFamilyTable {
        mode,
        momenta,
        energies,
        contour: Some(contour),
        columns,
        table,
    })
}

//! Two-photon connected vertex at zero total energy, incoming momenta 0.
//!
//! The unknown is the deviation `X = F₂ − F₂ʷᶜ` from the weak-correlation
//! product `F₂ʷᶜ(a,b) = F(a,0;−b) G(−b) F(b,0;0)`. With the direct and
//! exchange kernels it satisfies
//!
//! `X(a,b) = ∫dq ρ(q) D(−a−b−q) G(−q−b) [X(q,b) + X(b,q) + F₂ʷᶜ(b,q)]`.
//!
//! Both arguments are placed on the deformed path, the equation is solved
//! by Anderson-accelerated fixed-point iteration, and real-momentum values
//! are recovered by one Nyström extension per argument.

use rayon::prelude::*;
use wqed_numerics::{
    interp::{bicubic_lagrange, UniformAxis},
    linalg::{Lu, Mat},
    MomentumGrid, C64,
};

use super::{
    contour::{Contour, ContourColumn, System},
    EnergyFamilyTable, SolverOptions, VertexMode,
};
use crate::{
    error::VertexError,
    model::{propagator, spectral_weight, ModelParams},
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Controls for the two-photon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceOptions {
    /// Grid whose nodes define the path for both arguments.
    pub contour_grid: MomentumGrid,
    pub solver: SolverOptions,
    /// Real output axis `[−extent, extent]`; `None` takes the family's
    /// energy range.
    pub table_extent: Option<f64>,
    pub table_points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Anderson history length.
    pub memory: usize,
    pub damping: f64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self {
            contour_grid: MomentumGrid::uniform(10.0, 201).expect("valid default grid"),
            solver: SolverOptions::default(),
            table_extent: None,
            table_points: 401,
            tolerance: 1e-6,
            max_iterations: 500,
            memory: 10,
            damping: 1.0,
        }
    }
}

/// `X(k₁′, k₂′)` on a real grid, with the iteration history.
#[derive(Debug, Clone)]
pub struct TwoPhotonVertexSlice {
    grid: MomentumGrid,
    axis: UniformAxis,
    values: Vec<C64>,
    iteration_report: Vec<f64>,
}

impl TwoPhotonVertexSlice {
    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// Row-major `X(a_i, b_j)`.
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn iteration_report(&self) -> &[f64] {
        &self.iteration_report
    }

    pub fn final_residual(&self) -> f64 {
        self.iteration_report.last().copied().unwrap_or(0.0)
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        self.axis.contains(a) && self.axis.contains(b)
    }

    /// Bicubic interpolation of `X(a, b)`.
    pub fn value(&self, a: f64, b: f64) -> C64 {
        if self.values.is_empty() {
            return ZERO;
        }
        bicubic_lagrange(&self.values, &self.axis, &self.axis, a, b)
    }
}

/// Discretized two-photon problem with all one-photon ingredients
/// precomputed on the path.
pub struct PairSolver {
    params: ModelParams,
    contour: Contour,
    n: usize,
    /// `w_j ρ(z_j)`.
    wr: Vec<C64>,
    /// `G(−z_j)`.
    g_neg: Vec<C64>,
    /// `F(z_j, 0; 0)`.
    f0: Vec<C64>,
    /// Columns at energy `−z_j`.
    shifted: Vec<ContourColumn>,
    /// `β[l·n + j] = w_j ρ(z_j) G(−z_j − z_l)`.
    beta: Vec<C64>,
    /// `F₂ʷᶜ(z_l, z_j)` at `[l·n + j]`.
    wc: Vec<C64>,
}

impl PairSolver {
    pub fn new(params: &ModelParams, options: &SliceOptions) -> Result<Self, VertexError> {
        let contour = Contour::for_params(params, &options.contour_grid, &options.solver);
        let z = contour.nodes().to_vec();
        let n = z.len();
        let wr: Vec<C64> = (0..n)
            .map(|j| contour.weights()[j] * spectral_weight(params, z[j]))
            .collect();
        let g_neg: Vec<C64> = z.iter().map(|&q| propagator(params, -q)).collect();
        let origin = [C64::new(0.0, 0.0)];
        let f0 = System::assemble(params, &contour, ZERO, false, &options.solver)?
            .solve(&contour, &origin)
            .remove(0)
            .values;
        let shifted: Vec<ContourColumn> = z
            .par_iter()
            .map(|&zj| {
                System::assemble(params, &contour, -zj, false, &options.solver)
                    .map(|s| s.solve(&contour, &origin).remove(0))
                    .map_err(|err| VertexError::AtEnergy {
                        energy: -zj.re,
                        source: Box::new(err),
                    })
            })
            .collect::<Result<_, _>>()?;
        let mut beta = vec![ZERO; n * n];
        let mut wc = vec![ZERO; n * n];
        for l in 0..n {
            for j in 0..n {
                beta[l * n + j] = wr[j] * propagator(params, -z[j] - z[l]);
                wc[l * n + j] = shifted[j].values[l] * g_neg[j] * f0[j];
            }
        }
        Ok(Self {
            params: *params,
            contour,
            n,
            wr,
            g_neg,
            f0,
            shifted,
            beta,
            wc,
        })
    }

    pub fn contour(&self) -> &Contour {
        &self.contour
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `F(b, 0; −z_j)` for any `b` off the path's image.
    fn shifted_at(&self, j: usize, b: C64) -> C64 {
        let zj = self.contour.nodes()[j];
        (-zj - b).inv() + self.shifted[j].regular_at(&self.contour, b)
    }

    /// Weak-correlation product `F(a,0;−b) G(−b) F(b,0;0)` on path nodes,
    /// stored by second argument: `[l·n + i] = F₂ʷᶜ(z_i, z_l)`.
    pub fn weak_correlation_nodes(&self) -> Vec<C64> {
        let n = self.n;
        let mut out = vec![ZERO; n * n];
        for l in 0..n {
            for i in 0..n {
                out[l * n + i] = self.shifted[l].values[i] * self.g_neg[l] * self.f0[l];
            }
        }
        out
    }

    /// Apply the kernel to `u` (stored by second argument).
    ///
    /// `source` adds `F₂ʷᶜ` to the bracket; `exchange` toggles the
    /// `X(b,q)` term.
    fn apply(&self, u: &[C64], exchange: bool, source: bool) -> Vec<C64> {
        let n = self.n;
        let z = self.contour.nodes();
        let caps = self.contour.cap_points();
        let horizontal = self.contour.horizontal();
        let nh = horizontal.len();
        let x = self.contour.grid().nodes();
        let depth = self.contour.depth();
        let mut out = vec![ZERO; n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(l, col)| {
            let zl = z[l];
            let b: Vec<C64> = (0..n)
                .map(|j| {
                    let mut s = u[l * n + j];
                    if exchange {
                        s += u[j * n + l];
                    }
                    if source {
                        s += self.wc[l * n + j];
                    }
                    self.beta[l * n + j] * s
                })
                .collect();
            // 1/(−z_i − z_j − z_l) depends on i + j along the flat segment.
            let diag: Vec<C64> = (0..2 * nh - 1)
                .map(|s| {
                    let sum = if s < nh { x[0] + x[s] } else { x[s - nh + 1] + x[nh - 1] };
                    (C64::new(-sum, 2.0 * depth) - zl).inv()
                })
                .collect();
            let mut row = vec![ZERO; n];
            for (i, v) in col.iter_mut().enumerate() {
                let flat_i = horizontal.contains(&i);
                for (j, r) in row.iter_mut().enumerate() {
                    *r = if flat_i && horizontal.contains(&j) {
                        diag[(i - caps) + (j - caps)]
                    } else {
                        (-z[i] - z[j] - zl).inv()
                    };
                }
                *v = row.iter().zip(&b).map(|(&r, &bj)| r * bj).sum();
            }
        });
        out
    }

    /// Solve for `X` on the path.
    pub fn solve_nodes(&self, options: &SliceOptions) -> Result<(Vec<C64>, Vec<f64>), VertexError> {
        let src = self.apply(&vec![ZERO; self.n * self.n], false, true);
        anderson(|u| add(&src, &self.apply(u, true, false)), src.clone(), options)
    }

    /// Solve the direct-kernel-only equation for the full `F₂`; its exact
    /// solution is the weak-correlation product.
    pub fn solve_without_exchange(&self, options: &SliceOptions) -> Result<(Vec<C64>, Vec<f64>), VertexError> {
        let n = self.n;
        let z = self.contour.nodes();
        let mut free = vec![ZERO; n * n];
        for l in 0..n {
            for i in 0..n {
                free[l * n + i] = (-z[i] - z[l]).inv() * self.g_neg[l] * self.f0[l];
            }
        }
        anderson(|u| add(&free, &self.apply(u, false, false)), free.clone(), options)
    }

    /// `Src(a,b) = ∫ρ D(−a−b−q) G(−q−b) F₂ʷᶜ(b,q)` at arbitrary arguments.
    pub fn source_at(&self, a: C64, b: C64) -> C64 {
        let z = self.contour.nodes();
        (0..self.n)
            .map(|j| {
                let wc = self.shifted_at(j, b) * self.g_neg[j] * self.f0[j];
                self.wr[j] * propagator(&self.params, -z[j] - b) / (-a - b - z[j]) * wc
            })
            .sum()
    }

    /// Second Neumann iterate `Src + K·Src` at arbitrary arguments.
    pub fn neumann_two_term(&self, a: C64, b: C64) -> C64 {
        let z = self.contour.nodes();
        let mut acc = self.source_at(a, b);
        for (&zj, &wr) in z.iter().zip(&self.wr).take(self.n) {
            let s = self.source_at(zj, b) + self.source_at(b, zj);
            acc += wr * propagator(&self.params, -zj - b) / (-a - b - zj) * s;
        }
        acc
    }

    /// Real-axis table of `X` from its path values.
    pub fn extend(&self, x_nodes: &[C64], axis: &UniformAxis) -> Result<Vec<C64>, VertexError> {
        let n = self.n;
        let z = self.contour.nodes();
        let m = axis.len;
        let columns: Vec<Vec<C64>> = (0..m)
            .into_par_iter()
            .map(|ib| {
                let bb = axis.node(ib);
                let b = C64::new(bb, 0.0);
                // U(j) = X(B, z_j) + F₂ʷᶜ(B, z_j)
                let u: Vec<C64> = (0..n)
                    .map(|l| {
                        let zl = z[l];
                        let zb: C64 = (0..n)
                            .map(|j| {
                                let s = x_nodes[l * n + j] + x_nodes[j * n + l] + self.wc[l * n + j];
                                self.beta[l * n + j] / (-b - zl - z[j]) * s
                            })
                            .sum();
                        zb + self.shifted_at(l, b) * self.g_neg[l] * self.f0[l]
                    })
                    .collect();
                let kb: Vec<C64> = (0..n)
                    .map(|j| self.wr[j] * propagator(&self.params, -z[j] - b))
                    .collect();
                let kmat = Mat::from_fn(n, n, |i, j| kb[j] / (-z[i] - b - z[j]));
                let lhs = Mat::from_fn(n, n, |i, j| {
                    let id = if i == j { C64::new(1.0, 0.0) } else { ZERO };
                    id - kmat[(i, j)]
                });
                let rhs: Vec<C64> = (0..n).map(|i| (0..n).map(|j| kmat[(i, j)] * u[j]).sum()).collect();
                let lu = Lu::new(&lhs);
                if !(lu.pivot_ratio() >= 1e-13) {
                    return Err(VertexError::SingularSystem {
                        energy: bb,
                        pivot_ratio: lu.pivot_ratio(),
                    });
                }
                let y = lu.solve_vec(&rhs);
                let s: Vec<C64> = (0..n).map(|j| kb[j] * (y[j] + u[j])).collect();
                Ok((0..m)
                    .map(|ia| {
                        let a = axis.node(ia);
                        (0..n).map(|j| s[j] / (-a - bb - z[j])).sum()
                    })
                    .collect())
            })
            .collect::<Result<_, _>>()?;
        let mut values = vec![ZERO; m * m];
        for (ib, col) in columns.iter().enumerate() {
            for (ia, &v) in col.iter().enumerate() {
                values[ia * m + ib] = v;
            }
        }
        Ok(values)
    }
}

/// Solve for the two-photon vertex slice.
///
/// The real output table spans the family's energy range unless
/// `options.table_extent` says otherwise. Non-exact families and `γ = 0`
/// give an identically zero slice.
pub fn solve_f12_slice(
    params: &ModelParams,
    family: &EnergyFamilyTable,
    options: &SliceOptions,
) -> Result<TwoPhotonVertexSlice, VertexError> {
    let extent = options.table_extent.unwrap_or_else(|| {
        let (lo, hi) = family.energy_range();
        lo.abs().max(hi.abs())
    });
    let grid = MomentumGrid::uniform(extent, options.table_points)?;
    let axis = UniformAxis::new(-extent, extent, options.table_points);
    if family.mode() != VertexMode::Exact || params.gamma() == 0.0 {
        return Ok(TwoPhotonVertexSlice {
            grid,
            axis,
            values: Vec::new(),
            iteration_report: vec![0.0],
        });
    }
    let solver = PairSolver::new(params, options)?;
    let (x, history) = solver.solve_nodes(options)?;
    let values = solver.extend(&x, &axis)?;
    Ok(TwoPhotonVertexSlice {
        grid,
        axis,
        values,
        iteration_report: history,
    })
}

fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Anderson mixing for `x = Φ(x)` with relative-residual stopping.
fn anderson<F>(phi: F, start: Vec<C64>, options: &SliceOptions) -> Result<(Vec<C64>, Vec<f64>), VertexError>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let beta = options.damping;
    let mut x = start;
    let mut history = Vec::new();
    let mut dx: Vec<Vec<C64>> = Vec::new();
    let mut dr: Vec<Vec<C64>> = Vec::new();
    let mut prev: Option<(Vec<C64>, Vec<C64>)> = None;
    for _ in 0..options.max_iterations {
        let g = phi(&x);
        let r: Vec<C64> = g.iter().zip(&x).map(|(a, b)| a - b).collect();
        let rel = norm(&r) / norm(&g).max(f64::MIN_POSITIVE);
        history.push(rel);
        if rel < options.tolerance {
            return Ok((g, history));
        }
        if let Some((px, pr)) = prev.take() {
            dx.push(x.iter().zip(&px).map(|(a, b)| a - b).collect());
            dr.push(r.iter().zip(&pr).map(|(a, b)| a - b).collect());
            if dx.len() > options.memory {
                dx.remove(0);
                dr.remove(0);
            }
        }
        let coeffs = least_squares(&dr, &r);
        let mut next: Vec<C64> = x.iter().zip(&r).map(|(a, b)| a + b * beta).collect();
        for (c, (sx, sr)) in coeffs.iter().zip(dx.iter().zip(&dr)) {
            for (v, (a, b)) in next.iter_mut().zip(sx.iter().zip(sr)) {
                *v -= (a + b * beta) * c;
            }
        }
        prev = Some((x, r));
        x = next;
    }
    let residual = history.last().copied().unwrap_or(f64::NAN);
    Err(VertexError::NoConvergence {
        iterations: options.max_iterations,
        residual,
        history,
    })
}

/// Regularized normal equations for `min ‖r − Σ c_k d_k‖`.
fn least_squares(d: &[Vec<C64>], r: &[C64]) -> Vec<C64> {
    let m = d.len();
    if m == 0 {
        return Vec::new();
    }
    let mut gram = Mat::from_fn(m, m, |i, j| dot(&d[i], &d[j]));
    let trace: f64 = (0..m).map(|i| gram[(i, i)].re).sum();
    for i in 0..m {
        gram[(i, i)] += C64::new(1e-12 * trace, 0.0);
    }
    let rhs: Vec<C64> = d.iter().map(|di| dot(di, r)).collect();
    Lu::new(&gram).solve_vec(&rhs)
}

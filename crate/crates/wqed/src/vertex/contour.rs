use wqed_numerics::{
    linalg::{matmul, Lu, Mat},
    quad::gauss_legendre,
    MomentumGrid, C64,
};

use super::SolverOptions;
use crate::{
    error::VertexError,
    model::{propagator, propagator_derivative, spectral_weight, ModelParams},
};

/// The integration path `−K → −K−iδ → K−iδ → K` with its quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    grid: MomentumGrid,
    depth: f64,
    caps: usize,
    nodes: Vec<C64>,
    weights: Vec<C64>,
}

impl Contour {
    pub fn new(grid: &MomentumGrid, depth: f64, cap_points: usize) -> Self {
        let k = grid.k_max();
        let (s, ws) = gauss_legendre(cap_points, 0.0, depth);
        let mut nodes = Vec::with_capacity(grid.len() + 2 * cap_points);
        let mut weights = Vec::with_capacity(nodes.capacity());
        // Left cap runs downward: q = −K − i s, dq = −i ds.
        for (&si, &wi) in s.iter().zip(&ws) {
            nodes.push(C64::new(-k, -si));
            weights.push(C64::new(0.0, -wi));
        }
        for (&x, &w) in grid.nodes().iter().zip(grid.weights()) {
            nodes.push(C64::new(x, -depth));
            weights.push(C64::new(w, 0.0));
        }
        // Right cap runs upward: q = K − i s with s from δ to 0, dq = −i ds.
        for (&si, &wi) in s.iter().zip(&ws).rev() {
            nodes.push(C64::new(k, -si));
            weights.push(C64::new(0.0, wi));
        }
        Self {
            grid: grid.clone(),
            depth,
            caps: cap_points,
            nodes,
            weights,
        }
    }

    pub fn for_params(p: &ModelParams, grid: &MomentumGrid, options: &SolverOptions) -> Self {
        let depth = options.contour_depth.unwrap_or_else(|| default_depth(p, grid));
        Self::new(grid, depth, options.cap_points)
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn cap_points(&self) -> usize {
        self.caps
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[C64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    /// Index range of the horizontal segment.
    pub fn horizontal(&self) -> std::ops::Range<usize> {
        self.caps..self.caps + self.grid.len()
    }
}

/// `min(0.5, 2/R, K/4)`: deep enough for exponential convergence of the
/// trapezoid rule, shallow enough that `cos(qR)` stays moderate.
pub fn default_depth(p: &ModelParams, grid: &MomentumGrid) -> f64 {
    let r = p.leg_separation();
    let mut d: f64 = 0.5;
    if r > 0.0 {
        d = d.min(2.0 / r);
    }
    d.min(0.25 * grid.k_max())
}

/// Solution of the one-photon equation at one energy and incoming momentum,
/// sampled on the contour.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourColumn {
    pub energy: C64,
    pub incoming: C64,
    /// `F(z_j)` including the free term.
    pub values: Vec<C64>,
    /// `c_j F(z_j)`.
    pub residues: Vec<C64>,
    /// Energy derivative of `residues`, when requested.
    pub residues_de: Option<Vec<C64>>,
}

impl ContourColumn {
    /// Smooth part `F_reg(k′)` at any `k′` off the path's image.
    pub fn regular_at(&self, contour: &Contour, k: C64) -> C64 {
        let e = self.energy - k;
        contour
            .nodes()
            .iter()
            .zip(&self.residues)
            .map(|(&z, &r)| r / (e - z))
            .sum()
    }

    /// `(F_reg, ∂_k F_reg, ∂_E F_reg, ∂_k ∂_E F_reg)` at `k`.
    pub fn regular_derivatives(&self, contour: &Contour, k: C64) -> [C64; 4] {
        let e = self.energy - k;
        let zero = C64::new(0.0, 0.0);
        let de = self.residues_de.as_deref();
        let mut out = [zero; 4];
        for (j, (&z, &r)) in contour.nodes().iter().zip(&self.residues).enumerate() {
            let y = (e - z).inv();
            let y2 = y * y;
            out[0] += r * y;
            out[1] += r * y2;
            if let Some(de) = de {
                out[2] += de[j] * y - r * y2;
                out[3] += de[j] * y2 - r * y2 * y * 2.0;
            }
        }
        out
    }
}

/// The discretized operator at one energy, factored.
pub(crate) struct System {
    pub energy: C64,
    pub c: Vec<C64>,
    pub dc: Option<Vec<C64>>,
    pub a: Mat<C64>,
    pub lu: Lu,
}

impl System {
    pub fn assemble(
        p: &ModelParams,
        contour: &Contour,
        energy: C64,
        derivative: bool,
        options: &SolverOptions,
    ) -> Result<Self, VertexError> {
        let z = contour.nodes();
        let n = z.len();
        let c: Vec<C64> = (0..n)
            .map(|j| contour.weights()[j] * spectral_weight(p, z[j]) * propagator(p, energy - z[j]))
            .collect();
        let dc = derivative.then(|| {
            (0..n)
                .map(|j| contour.weights()[j] * spectral_weight(p, z[j]) * propagator_derivative(p, energy - z[j]))
                .collect::<Vec<_>>()
        });
        let a = Mat::from_fn(n, n, |i, j| c[j] / (energy - z[i] - z[j]));
        let m = Mat::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            C64::new(id, 0.0) - a[(i, j)]
        });
        let lu = Lu::new(&m);
        if !(lu.pivot_ratio() >= options.min_pivot_ratio) {
            return Err(VertexError::SingularSystem {
                energy: energy.re,
                pivot_ratio: lu.pivot_ratio(),
            });
        }
        Ok(Self { energy, c, dc, a, lu })
    }

    /// Solve for several incoming momenta at once.
    pub fn solve(&self, contour: &Contour, incoming: &[C64]) -> Vec<ContourColumn> {
        let z = contour.nodes();
        let n = z.len();
        let m = incoming.len();
        let d = Mat::from_fn(n, m, |j, c| (self.energy - z[j] - incoming[c]).inv());
        let s = matmul(&self.a, &d);
        let u = self.lu.solve(&s);
        let mut cols = Vec::with_capacity(m);
        for col in 0..m {
            let values: Vec<C64> = (0..n).map(|j| d[(j, col)] + u[(j, col)]).collect();
            let residues: Vec<C64> = (0..n).map(|j| self.c[j] * values[j]).collect();
            cols.push(ContourColumn {
                energy: self.energy,
                incoming: incoming[col],
                values,
                residues,
                residues_de: None,
            });
        }
        if let Some(dc) = &self.dc {
            // (I − A) F_u' = A' F + A d'  with A'_ij = c'_j y_ij − c_j y_ij².
            let da = Mat::from_fn(n, n, |i, j| {
                let y = (self.energy - z[i] - z[j]).inv();
                dc[j] * y - self.c[j] * y * y
            });
            let full = Mat::from_fn(n, m, |j, c| cols[c].values[j]);
            let dd = Mat::from_fn(n, m, |j, c| -d[(j, c)] * d[(j, c)]);
            let mut rhs = matmul(&da, &full);
            let extra = matmul(&self.a, &dd);
            for j in 0..n {
                for c in 0..m {
                    rhs[(j, c)] += extra[(j, c)];
                }
            }
            let du = self.lu.solve(&rhs);
            for (c, col) in cols.iter_mut().enumerate() {
                let de: Vec<C64> = (0..n)
                    .map(|j| {
                        let df = dd[(j, c)] + du[(j, c)];
                        dc[j] * col.values[j] + self.c[j] * df
                    })
                    .collect();
                col.residues_de = Some(de);
            }
        }
        cols
    }
}

//! Independent oracles and small helpers for the acceptance target.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use wqed::{
    model::{propagator, spectral_weight},
    ModelParams,
};
use wqed_numerics::{pv_integrate, MomentumGrid};

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Real-axis Neumann series for the smooth vertex part `F̄(k′, 0; E)`.
///
/// With `N(q) = ρ(q) G(E−q)` and `1/(x + i0)` split into a principal value
/// and a delta term, the first term is
/// `∫ N(q) / ((q − E + k′ − i0)(q − E − i0)) dq` and each further term adds
/// `−[P∫ N F̄ₙ / (q − E + k′) + iπ N F̄ₙ](E − k′)`. Iterated to a fixed point,
/// which exists for weak coupling.
pub struct BornVertex {
    pub grid: MomentumGrid,
    pub energy: f64,
    pub values: Vec<C64>,
    pub iterations: usize,
    /// Sup-norm of the last Neumann step relative to the solution.
    pub last_step: f64,
}

impl BornVertex {
    pub fn solve(p: &ModelParams, energy: f64, grid: &MomentumGrid) -> Self {
        let x = grid.nodes();
        let n = x.len();
        let h = grid.spacing();
        let k_max = grid.k_max();
        let node = |v: f64| -> Option<usize> {
            let i = ((v + k_max) / h).round();
            (i >= 0.0 && (i as usize) < n && (x[i as usize] - v).abs() < 1e-9 * h.max(1.0)).then_some(i as usize)
        };
        let e_node = node(energy).expect("energy must sit on a grid node");
        let kern: Vec<C64> = x
            .iter()
            .map(|&q| spectral_weight(p, C64::new(q, 0.0)) * propagator(p, C64::new(energy - q, 0.0)))
            .collect();
        let i_pi = C64::new(0.0, PI);
        let delta_pv =
            |f: &[C64], pole: f64, at: usize| -> Option<C64> { Some(pv_integrate(f, pole, grid).ok()? + i_pi * f[at]) };

        // Nodes whose pole E − k′ lies within the PV margin of the cutoff
        // are filled by constant extension.
        let valid: Vec<Option<usize>> = x
            .iter()
            .map(|&kp| {
                let pole = energy - kp;
                if pole.abs() < k_max - 3.0 * h {
                    node(pole)
                } else {
                    None
                }
            })
            .collect();
        let at_e = delta_pv(&kern, energy, e_node).expect("energy inside the grid");
        let centre = grid.center();
        let mut first = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            if i == centre {
                continue;
            }
            if let Some(j) = valid[i] {
                let at_p1 = delta_pv(&kern, x[j], j).expect("pole inside the grid");
                // Partial fractions with poles E − k′ and E.
                first[i] = (at_e - at_p1) / x[i];
            }
        }
        let fill = |v: &mut Vec<C64>| {
            v[centre] = (v[centre - 2] * -1.0 + v[centre - 1] * 4.0 + v[centre + 1] * 4.0 - v[centre + 2]) / 6.0;
            let lo = (0..n).find(|&i| valid[i].is_some()).expect("some node valid");
            let hi = (0..n).rev().find(|&i| valid[i].is_some()).expect("some node valid");
            for i in 0..lo {
                v[i] = v[lo];
            }
            for i in hi + 1..n {
                v[i] = v[hi];
            }
        };
        fill(&mut first);

        let mut f = first.clone();
        let mut iterations = 0;
        let mut last_step = f64::INFINITY;
        for _ in 0..40 {
            iterations += 1;
            let g: Vec<C64> = kern.iter().zip(&f).map(|(a, b)| a * b).collect();
            let mut next = first.clone();
            for i in 0..n {
                if let Some(j) = valid[i] {
                    next[i] -= delta_pv(&g, x[j], j).expect("pole inside the grid");
                }
            }
            fill(&mut next);
            let change = next.iter().zip(&f).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let scale = next.iter().map(|z| z.norm()).fold(0.0, f64::max);
            f = next;
            last_step = change / scale;
            if last_step <= 1e-10 {
                break;
            }
        }
        Self {
            grid: grid.clone(),
            energy,
            values: f,
            iterations,
            last_step,
        }
    }

    /// Value at a grid node.
    pub fn at(&self, k_out: f64) -> C64 {
        let i = self.grid.nearest(k_out);
        assert!((self.grid.nodes()[i] - k_out).abs() < 1e-9, "{k_out} is not a node");
        self.values[i]
    }
}

/// `G(0) G(a) [1/a + F̄(b,0;a+b)] G(−c) [−1/c + F̄(c,0;0)]` averaged over the
/// six orderings of `(a, b, c)`: the connected three-photon core with the
/// one-photon vertex only, at generic momenta.
pub fn product_form_core(p: &ModelParams, vertex: &dyn Fn(f64, f64) -> C64, momenta: [f64; 3]) -> C64 {
    let g = |x: f64| propagator(p, C64::new(x, 0.0));
    let [x, y, z] = momenta;
    [[x, y, z], [x, z, y], [y, x, z], [y, z, x], [z, x, y], [z, y, x]]
        .iter()
        .map(|&[a, b, c]| g(0.0) * g(a) * (1.0 / a + vertex(b, a + b)) * g(-c) * (-1.0 / c + vertex(c, 0.0)))
        .sum::<C64>()
        / 6.0
}

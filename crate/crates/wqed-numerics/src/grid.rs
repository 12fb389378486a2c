//! Uniform symmetric momentum grids.

use crate::{NumericsError, Result};

/// Gregory end corrections for the trapezoid rule (third order in the
/// endpoint derivatives). Interior weights are 1, all scaled by the spacing.
const GREGORY: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];

/// Symmetric uniform nodes on `[-k_max, k_max]` with endpoint-corrected
/// trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    k_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl MomentumGrid {
    /// `n_points` must be odd and at least 3 so that 0 is a node.
    pub fn uniform(k_max: f64, n_points: usize) -> Result<Self> {
        if !(k_max.is_finite() && k_max > 0.0) {
            return Err(NumericsError::InvalidGrid(format!(
                "k_max must be positive and finite, got {k_max}"
            )));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(NumericsError::InvalidGrid(format!(
                "n_points must be odd and >= 3, got {n_points}"
            )));
        }
        let m = (n_points - 1) / 2;
        let h = k_max / m as f64;
        let mut nodes: Vec<f64> = (0..n_points).map(|i| (i as f64 - m as f64) * h).collect();
        nodes[0] = -k_max;
        nodes[n_points - 1] = k_max;
        nodes[m] = 0.0;

        let mut weights = vec![h; n_points];
        if n_points >= 7 {
            for (j, g) in GREGORY.iter().enumerate() {
                weights[j] = g * h;
                weights[n_points - 1 - j] = g * h;
            }
        } else {
            weights[0] = 0.5 * h;
            weights[n_points - 1] = 0.5 * h;
        }
        Ok(Self { k_max, nodes, weights })
    }

    /// Grid with the given spacing-compatible cutoff: the largest odd node
    /// count whose spacing does not exceed `max_spacing`.
    pub fn with_spacing(k_max: f64, max_spacing: f64) -> Result<Self> {
        if !(max_spacing > 0.0) {
            return Err(NumericsError::InvalidGrid(format!(
                "spacing must be positive, got {max_spacing}"
            )));
        }
        let half = (k_max / max_spacing).ceil().max(1.0) as usize;
        Self::uniform(k_max, 2 * half + 1)
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.k_max / ((self.nodes.len() - 1) / 2) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the node at 0.
    pub fn center(&self) -> usize {
        (self.nodes.len() - 1) / 2
    }

    /// Index of the node closest to `k`, clamped to the grid.
    pub fn nearest(&self, k: f64) -> usize {
        let pos = ((k + self.k_max) / self.spacing()).round();
        pos.clamp(0.0, (self.nodes.len() - 1) as f64) as usize
    }

    /// Same cutoff, half the spacing.
    pub fn refined(&self) -> Self {
        Self::uniform(self.k_max, 2 * self.nodes.len() - 1).expect("refinement of a valid grid")
    }

    /// Same spacing, cutoff multiplied by `factor`.
    pub fn widened(&self, factor: usize) -> Self {
        let m = (self.nodes.len() - 1) / 2;
        Self::uniform(self.k_max * factor as f64, 2 * m * factor + 1).expect("widening of a valid grid")
    }

    /// Compensated sum of the weights.
    pub fn weight_sum(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &w in &self.weights {
            let t = sum + w;
            comp += if sum.abs() >= w.abs() {
                (sum - t) + w
            } else {
                (w - t) + sum
            };
            sum = t;
        }
        sum + comp
    }

    /// Quadrature of sampled values.
    pub fn integrate<T>(&self, values: &[T]) -> T
    where
        T: Copy + std::iter::Sum + std::ops::Mul<f64, Output = T>,
    {
        values.iter().zip(&self.weights).map(|(&v, &w)| v * w).sum()
    }
}

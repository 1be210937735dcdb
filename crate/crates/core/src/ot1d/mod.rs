//! Exact optimal transport on the real line.
//!
//! For a strictly convex cost `h(x - y)` the optimal coupling is the monotone
//! (north-west corner) rearrangement of the two sorted measures. Walking that
//! chain also yields Kantorovich potentials: complementary slackness forces
//! `f_i + g_j = h(x_i - y_j)` on every support cell, so fixing one value
//! propagates to all the others.

pub mod oracle;

use ndarray::Array1;

use crate::error::{AotError, Result};
use crate::measures::TransportPlan;

pub use oracle::lp_oracle_small;

/// Absolute tolerance for declaring two cumulative masses equal.
pub const MASS_TIE_TOL: f64 = 1e-12;

/// Convex 1D ground cost `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OneDCost {
    Square,
    Abs,
}

impl OneDCost {
    #[inline]
    pub fn eval(self, diff: f64) -> f64 {
        match self {
            OneDCost::Square => diff * diff,
            OneDCost::Abs => diff.abs(),
        }
    }
}

/// Weighted point set on the line together with its sorting permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected1DMeasure {
    positions: Array1<f64>,
    weights: Array1<f64>,
    /// `order[k]` is the original index of the k-th smallest position.
    order: Vec<usize>,
}

impl Projected1DMeasure {
    pub fn new(positions: Array1<f64>, weights: Array1<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(AotError::EmptyMeasure);
        }
        if positions.len() != weights.len() {
            return Err(AotError::DimensionMismatch { expected: positions.len(), got: weights.len() });
        }
        if let Some(p) = positions.iter().find(|p| p.is_nan()) {
            return Err(AotError::NonFinite(format!("projected position {p}")));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value > 0.0) {
                return Err(AotError::PositivityViolation { index, value });
            }
        }
        let mut order: Vec<usize> = (0..positions.len()).collect();
        order.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]));
        Ok(Self { positions, weights, order })
    }

    pub fn positions(&self) -> &Array1<f64> {
        &self.positions
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn sort_permutation(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn cumulative_sorted(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.order
            .iter()
            .map(|&k| {
                acc += self.weights[k];
                acc
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct OneDSolution {
    /// Monotone chain in original indices, including zero-mass pivots.
    pub plan: TransportPlan,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub cost: f64,
}

/// Monotone coupling and dual potentials between two 1D measures.
///
/// The gauge is fixed by `g = 0` on the leftmost atom of `b`. When both
/// cumulative masses are exhausted together, a zero-mass pivot `(next row,
/// current col)` keeps the chain connected, and the following block restarts
/// at `g = 0` clamped to the range that keeps the duals feasible.
pub fn solve_1d(a: &Projected1DMeasure, b: &Projected1DMeasure, h: OneDCost) -> Result<OneDSolution> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(AotError::EmptyMeasure);
    }
    let ca = a.cumulative_sorted();
    let cb = b.cumulative_sorted();
    let (ta, tb) = (ca[n - 1], cb[m - 1]);
    if (ta - tb).abs() > 1e-9 {
        return Err(AotError::MassMismatch { a: ta, b: tb });
    }

    let (sa, sb) = (a.sort_permutation(), b.sort_permutation());
    let x = |i: usize| a.positions[sa[i]];
    let y = |j: usize| b.positions[sb[j]];
    let cell_mass = |i: usize, j: usize| {
        let lo = if i == 0 { 0.0 } else { ca[i - 1] }.max(if j == 0 { 0.0 } else { cb[j - 1] });
        (ca[i].min(cb[j]) - lo).max(0.0)
    };

    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut triples = Vec::with_capacity(n + m - 1);
    let mut cost = 0.0;

    let (mut i, mut j) = (0usize, 0usize);
    g[sb[0]] = 0.0;
    f[sa[0]] = h.eval(x(0) - y(0));
    loop {
        let mass = cell_mass(i, j);
        cost += mass * h.eval(x(i) - y(j));
        triples.push((sa[i], sb[j], mass));
        if i + 1 == n && j + 1 == m {
            break;
        }
        let advance_row = if i + 1 == n {
            false
        } else if j + 1 == m {
            true
        } else {
            let d = ca[i] - cb[j];
            if d.abs() <= MASS_TIE_TOL {
                triples.push((sa[i + 1], sb[j], 0.0));
                // The next block is only tied to this one through the corner
                // constraints at (i+1, j) and (i, j+1). Restart its gauge at 0
                // when both allow it, otherwise take the nearest feasible value.
                let diag = h.eval(x(i + 1) - y(j + 1));
                let lo = diag + g[sb[j]] - h.eval(x(i + 1) - y(j));
                let hi = h.eval(x(i) - y(j + 1)) - f[sa[i]];
                let t = 0.0f64.max(lo).min(hi);
                i += 1;
                j += 1;
                g[sb[j]] = t;
                f[sa[i]] = diag - t;
                continue;
            }
            d < 0.0
        };
        if advance_row {
            i += 1;
            f[sa[i]] = h.eval(x(i) - y(j)) - g[sb[j]];
        } else {
            j += 1;
            g[sb[j]] = h.eval(x(i) - y(j)) - f[sa[i]];
        }
    }

    let plan = TransportPlan::sparse_chain(n, m, triples)?;
    Ok(OneDSolution { plan, f, g, cost })
}

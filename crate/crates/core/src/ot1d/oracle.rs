//! Exhaustive exact solver for tiny transport LPs.
//!
//! Meant as a slow, independent reference in tests: it shares no code with the
//! monotone sweep. Equal-size uniform problems are solved by enumerating all
//! permutation couplings; everything else runs a textbook min-cost flow.

use ndarray::Array2;

use crate::error::{AotError, Result};
use crate::measures::{CostMatrix, DiscreteMeasure, TransportPlan};

const MAX_SIDE: usize = 6;

/// Exact unregularized optimum `(cost, plan)` for `n, m <= 6`.
pub fn lp_oracle_small(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
) -> Result<(f64, TransportPlan)> {
    let (n, m) = c.shape();
    if mu.len() != n || nu.len() != m {
        return Err(AotError::ShapeMismatch(format!("cost {n}x{m}")));
    }
    if n > MAX_SIDE || m > MAX_SIDE {
        return Err(AotError::TooLarge(format!("{n}x{m} exceeds {MAX_SIDE}x{MAX_SIDE}")));
    }
    let a = mu.weights().to_vec();
    let b = nu.weights().to_vec();
    let cv = c.values();

    let is_uniform = |w: &[f64]| w.iter().all(|v| (v - w[0]).abs() <= 1e-12);
    if n == m && is_uniform(&a) && is_uniform(&b) {
        let (cost, perm) = best_permutation(cv);
        let mut p = Array2::zeros((n, n));
        for (i, &j) in perm.iter().enumerate() {
            p[[i, j]] = 1.0 / n as f64;
        }
        return Ok((cost / n as f64, TransportPlan::dense(p, 0.0)?));
    }

    let flow = min_cost_flow(&a, &b, cv)?;
    let cost = flow.iter().zip(cv.iter()).map(|(x, c)| x * c).sum();
    Ok((cost, TransportPlan::dense(flow, 0.0)?))
}

fn best_permutation(c: &Array2<f64>) -> (f64, Vec<usize>) {
    fn go(
        c: &Array2<f64>,
        row: usize,
        used: &mut [bool],
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        let n = used.len();
        if row == n {
            if acc < best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                go(c, row + 1, used, cur, acc + c[[row, j]], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let n = c.nrows();
    let mut best = (f64::INFINITY, Vec::new());
    go(c, 0, &mut vec![false; n], &mut Vec::with_capacity(n), 0.0, &mut best);
    best
}

/// Successive shortest augmenting paths on the residual bipartite graph.
///
/// Forward arcs `i -> j` cost `C_ij` with unbounded capacity; backward arcs
/// `j -> i` cost `-C_ij` with capacity equal to the current flow. Augmenting
/// along a shortest path keeps the residual graph free of negative cycles, so
/// the final flow is optimal.
fn min_cost_flow(a: &[f64], b: &[f64], c: &Array2<f64>) -> Result<Array2<f64>> {
    const DONE: f64 = 1e-15;
    // round-off can fake tiny negative cycles; ignore sub-tolerance gains
    const RELAX_TOL: f64 = 1e-13;
    let (n, m) = (a.len(), b.len());
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = Array2::<f64>::zeros((n, m));
    for _ in 0..4 * (n + m) * (n + m) {
        if supply.iter().all(|s| *s <= DONE) || demand.iter().all(|d| *d <= DONE) {
            return Ok(flow);
        }
        // Bellman-Ford from every row with supply left; nodes are rows then columns
        let mut dist = vec![f64::INFINITY; n + m];
        let mut pred = vec![usize::MAX; n + m];
        for i in 0..n {
            if supply[i] > DONE {
                dist[i] = 0.0;
            }
        }
        for _ in 0..n + m {
            let mut changed = false;
            for i in 0..n {
                for j in 0..m {
                    if dist[i].is_finite() && dist[i] + c[[i, j]] < dist[n + j] - RELAX_TOL {
                        dist[n + j] = dist[i] + c[[i, j]];
                        pred[n + j] = i;
                        changed = true;
                    }
                    if flow[[i, j]] > DONE && dist[n + j].is_finite() && dist[n + j] - c[[i, j]] < dist[i] - RELAX_TOL {
                        dist[i] = dist[n + j] - c[[i, j]];
                        pred[i] = n + j;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let target = (0..m)
            .filter(|&j| demand[j] > DONE && dist[n + j].is_finite())
            .min_by(|&x, &y| dist[n + x].total_cmp(&dist[n + y]))
            .ok_or_else(|| AotError::NonFinite("no augmenting path".into()))?;

        let mut path = Vec::new();
        let mut v = n + target;
        while pred[v] != usize::MAX {
            if path.len() > n + m {
                return Err(AotError::NonFinite("cycle in shortest-path tree".into()));
            }
            path.push((pred[v], v));
            v = pred[v];
        }
        let source = v;
        let mut push = supply[source].min(demand[target]);
        for &(u, w) in &path {
            if u >= n {
                push = push.min(flow[[w, u - n]]);
            }
        }
        for &(u, w) in &path {
            if u < n {
                flow[[u, w - n]] += push;
            } else {
                flow[[w, u - n]] -= push;
            }
        }
        supply[source] -= push;
        demand[target] -= push;
    }
    Err(AotError::NonFinite("min-cost flow did not terminate".into()))
}

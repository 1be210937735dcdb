//! Training-free sliced baseline (random-search min-SWGG).
//!
//! Every direction induces a monotone 1D coupling; read in original indices it
//! is a feasible plan of the full problem. The baseline keeps the one with the
//! smallest true transport cost.

use rayon::prelude::*;

use crate::error::Result;
use crate::measures::{build_cost_matrix, CostFamily, DiscreteMeasure, TransportPlan};
use crate::ot1d::solve_1d;
use crate::slicing::{project, slice_cost, ProjectionSet};

#[derive(Debug, Clone)]
pub struct LiftedPlanResult {
    pub plan: TransportPlan,
    pub chosen_theta_index: usize,
    /// `<C, plan>` under the ambient cost.
    pub lifted_cost: f64,
}

pub fn min_swgg_plan(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: CostFamily,
    pset: &ProjectionSet,
) -> Result<LiftedPlanResult> {
    let c = build_cost_matrix(mu, nu, cost)?;
    let h = slice_cost(cost);
    let candidates: Vec<(f64, TransportPlan)> = (0..pset.len())
        .into_par_iter()
        .map(|l| {
            let a = project(pset, l, mu)?;
            let b = project(pset, l, nu)?;
            let plan = solve_1d(&a, &b, h)?.plan;
            Ok((plan.transport_cost(&c)?, plan))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (l, cand) in candidates.iter().enumerate() {
        if cand.0 < candidates[best].0 {
            best = l;
        }
    }
    let (lifted_cost, plan) = candidates.into_iter().nth(best).expect("non-empty projection set");
    Ok(LiftedPlanResult { plan, chosen_theta_index: best, lifted_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{marginal_errors, Domain};
    use crate::slicing::{sample_projections, ProjectionFamily};
    use ndarray::array;

    #[test]
    fn identical_measures_give_identity() {
        let m = DiscreteMeasure::uniform(array![[0.0, 0.0], [1.0, 0.3], [0.2, 0.9]], Domain::Euclidean)
            .unwrap();
        let pset = sample_projections(ProjectionFamily::LinearSphere, 4, 2, 9).unwrap();
        let out = min_swgg_plan(&m, &m, CostFamily::SqEuclidean, &pset).unwrap();
        assert_eq!(out.lifted_cost, 0.0);
        for (i, j, _) in out.plan.triples() {
            assert_eq!(i, j);
        }
    }

    #[test]
    fn lifted_plans_are_feasible() {
        let mu = DiscreteMeasure::new(array![[0.0, 0.0], [1.0, 0.3], [0.2, 0.9]], array![0.2, 0.3, 0.5], Domain::Euclidean)
            .unwrap();
        let nu = DiscreteMeasure::new(array![[0.5, 0.5], [0.0, 1.0]], array![0.6, 0.4], Domain::Euclidean).unwrap();
        let pset = sample_projections(ProjectionFamily::LinearSphere, 10, 2, 1).unwrap();
        let out = min_swgg_plan(&mu, &nu, CostFamily::SqEuclidean, &pset).unwrap();
        let (r, c) = marginal_errors(&out.plan, &mu, &nu).unwrap();
        assert!(r <= 1e-9 && c <= 1e-9);
        let cm = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
        assert!((out.plan.transport_cost(&cm).unwrap() - out.lifted_cost).abs() <= 1e-9);
    }
}

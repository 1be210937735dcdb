mod common;

use aot_core::measures::{CostMatrix, DiscreteMeasure, Domain};
use aot_core::ot1d::{lp_oracle_small, solve_1d, OneDCost, OneDSolution, Projected1DMeasure};
use common::rel_err;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn as_measure(p: &Projected1DMeasure) -> DiscreteMeasure {
    let atoms = p.positions().clone().into_shape_with_order((p.len(), 1)).unwrap();
    DiscreteMeasure::new(atoms, p.weights().clone(), Domain::Euclidean).unwrap()
}

fn cost_matrix(a: &Projected1DMeasure, b: &Projected1DMeasure, h: OneDCost) -> CostMatrix {
    let c = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| h.eval(a.positions()[i] - b.positions()[j]));
    CostMatrix::from_array(c).unwrap()
}

fn measure(positions: Vec<f64>, counts: Vec<u32>) -> Projected1DMeasure {
    let total: u32 = counts.iter().sum();
    let w = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Projected1DMeasure::new(Array1::from(positions), w).unwrap()
}

fn check_duals(a: &Projected1DMeasure, b: &Projected1DMeasure, h: OneDCost, sol: &OneDSolution) {
    for i in 0..a.len() {
        for j in 0..b.len() {
            let c = h.eval(a.positions()[i] - b.positions()[j]);
            assert!(sol.f[i] + sol.g[j] <= c + 1e-9, "infeasible at ({i},{j})");
        }
    }
    for (i, j, mass) in sol.plan.triples() {
        if mass > 0.0 {
            let c = h.eval(a.positions()[i] - b.positions()[j]);
            assert!((sol.f[i] + sol.g[j] - c).abs() <= 1e-9);
        }
    }
    let dual = sol.f.dot(a.weights()) + sol.g.dot(b.weights());
    assert!((dual - sol.cost).abs() <= 1e-9, "dual {dual} vs primal {}", sol.cost);
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u32>, Vec<f64>, Vec<u32>)> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(1u32..6, n),
            prop::collection::vec(-3.0f64..3.0, m),
            prop::collection::vec(1u32..6, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_lp_with_rational_weights((xa, wa, xb, wb) in instance(), abs in any::<bool>()) {
        let h = if abs { OneDCost::Abs } else { OneDCost::Square };
        let (a, b) = (measure(xa, wa), measure(xb, wb));
        let sol = solve_1d(&a, &b, h).unwrap();
        let (lp, _) = lp_oracle_small(&as_measure(&a), &as_measure(&b), &cost_matrix(&a, &b, h)).unwrap();
        prop_assert!((sol.cost - lp).abs() <= 1e-12 * lp.max(1.0), "{} vs {lp}", sol.cost);
        check_duals(&a, &b, h, &sol);
        let (r, c) = aot_core::measures::marginal_errors(&sol.plan, &as_measure(&a), &as_measure(&b)).unwrap();
        prop_assert!(r <= 1e-12 && c <= 1e-12);
        prop_assert!(sol.plan.triples().iter().filter(|t| t.2 > 0.0).count() < a.len() + b.len());
    }

    #[test]
    fn uniform_ties_stay_feasible(xa in prop::collection::vec(-3.0f64..3.0, 1..7), shift in -1.0f64..1.0) {
        let n = xa.len();
        let xb: Vec<f64> = xa.iter().rev().map(|x| x * 0.7 + shift).collect();
        let a = measure(xa, vec![1; n]);
        let b = measure(xb, vec![1; n]);
        let sol = solve_1d(&a, &b, OneDCost::Square).unwrap();
        check_duals(&a, &b, OneDCost::Square, &sol);
    }

    #[test]
    fn invariant_to_atom_order(
        xa in prop::collection::vec(-3.0f64..3.0, 2..7),
        wa in prop::collection::vec(1u32..6, 6),
        xb in prop::collection::vec(-3.0f64..3.0, 1..7),
        rot in 0usize..6,
    ) {
        let n = xa.len();
        let wa = wa[..n].to_vec();
        let m = xb.len();
        let a = measure(xa.clone(), wa.clone());
        let b = measure(xb.clone(), vec![1; m]);
        let perm: Vec<usize> = (0..n).map(|k| (k + rot) % n).collect();
        let a2 = measure(perm.iter().map(|&k| xa[k]).collect(), perm.iter().map(|&k| wa[k]).collect());
        let s1 = solve_1d(&a, &b, OneDCost::Square).unwrap();
        let s2 = solve_1d(&a2, &b, OneDCost::Square).unwrap();
        prop_assert!((s1.cost - s2.cost).abs() <= 1e-12 * s1.cost.max(1.0));
        let mut t1: Vec<(usize, usize, u64)> = s1.plan.triples().into_iter().filter(|t| t.2 > 1e-14).map(|(i, j, v)| (i, j, (v * 1e9).round() as u64)).collect();
        let mut t2: Vec<(usize, usize, u64)> = s2.plan.triples().into_iter().filter(|t| t.2 > 1e-14).map(|(i, j, v)| (perm[i], j, (v * 1e9).round() as u64)).collect();
        t1.sort();
        t2.sort();
        prop_assert_eq!(t1, t2);
    }
}

#[test]
fn five_hundred_uniform_instances_match_permutation_oracle() {
    use rand::Rng;
    let mut r = common::rng(500);
    for _ in 0..500 {
        let n = r.random_range(1..=6);
        let xa: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let xb: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let (a, b) = (measure(xa, vec![1; n]), measure(xb, vec![1; n]));
        let sol = solve_1d(&a, &b, OneDCost::Square).unwrap();
        let c = cost_matrix(&a, &b, OneDCost::Square);
        let (lp, _) = lp_oracle_small(&as_measure(&a), &as_measure(&b), &c).unwrap();
        assert!((sol.cost - lp).abs() <= 1e-12 * lp.max(1.0));
        check_duals(&a, &b, OneDCost::Square, &sol);
    }
}

#[test]
fn potentials_are_weight_gradients() {
    use rand::Rng;
    let mut r = common::rng(77);
    let delta = 1e-6;
    let mut checked = 0;
    while checked < 40 {
        let (n, m) = (r.random_range(2..6), r.random_range(2..6));
        let xa = Array1::from_shape_fn(n, |_| r.random_range(-2.0..2.0));
        let xb = Array1::from_shape_fn(m, |_| r.random_range(-2.0..2.0));
        let wa = common::random_weights(&mut r, n);
        let wb = common::random_weights(&mut r, m);
        let a = Projected1DMeasure::new(xa.clone(), wa.clone()).unwrap();
        let b = Projected1DMeasure::new(xb.clone(), wb.clone()).unwrap();
        // skip instances whose interior cumulative masses nearly coincide
        let cum = |w: &Array1<f64>, x: &Array1<f64>| {
            let mut idx: Vec<usize> = (0..w.len()).collect();
            idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
            idx.iter().scan(0.0, |s, &i| { *s += w[i]; Some(*s) }).collect::<Vec<f64>>()
        };
        let (ca, cb) = (cum(&wa, &xa), cum(&wb, &xb));
        if ca[..n - 1].iter().any(|p| cb[..m - 1].iter().any(|q| (p - q).abs() < 1e-3)) {
            continue;
        }
        let sol = solve_1d(&a, &b, OneDCost::Square).unwrap();
        let mean_f = sol.f.dot(&wa);
        for i in 0..n {
            let bump = |s: f64| {
                let mut w = wa.clone();
                w[i] += s;
                let w = &w / w.sum();
                solve_1d(&Projected1DMeasure::new(xa.clone(), w).unwrap(), &b, OneDCost::Square).unwrap().cost
            };
            let fd = (bump(delta) - bump(-delta)) / (2.0 * delta);
            let an = sol.f[i] - mean_f;
            assert!(
                (fd - an).abs() <= 1e-3 * an.abs() + 1e-7,
                "i={i}: fd {fd} vs {an} (rel {})",
                rel_err(fd, an)
            );
        }
        checked += 1;
    }
}

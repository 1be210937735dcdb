mod common;

use aot_core::measures::{build_cost_matrix, plan_from_potentials, CostFamily, CostMatrix, Potentials};
use aot_core::ot1d::lp_oracle_small;
use aot_core::sinkhorn::{
    dual_objective, dual_objective_grad_f, f_from_g, g_from_f, semi_dual, sinkhorn_solve, SinkhornConfig,
};
use common::*;
use ndarray::Array1;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn double_update_never_decreases_dual() {
    let mut r = rng(1);
    for _ in 0..100 {
        let (n, m) = (r.random_range(1..7), r.random_range(1..7));
        let mu = random_measure(&mut r, n, 2);
        let nu = random_measure(&mut r, m, 2);
        let c = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
        let eps = r.random_range(0.05..1.0);
        let f = Array1::from_shape_fn(n, |_| r.random_range(-1.0..1.0));
        let g = Array1::from_shape_fn(m, |_| r.random_range(-1.0..1.0));
        let before = dual_objective(f.view(), g.view(), &mu, &nu, &c, eps).unwrap();
        let g1 = g_from_f(f.view(), &mu, &nu, &c, eps).unwrap();
        let f1 = f_from_g(g1.view(), &mu, &nu, &c, eps).unwrap();
        let after = dual_objective(f1.view(), g1.view(), &mu, &nu, &c, eps).unwrap();
        assert!(after >= before - 1e-12 * before.abs().max(1.0), "{before} -> {after}");
    }
}

#[test]
fn semi_dual_dominates_perturbed_g() {
    let mut r = rng(2);
    for _ in 0..50 {
        let mu = random_measure(&mut r, 4, 2);
        let nu = random_measure(&mut r, 5, 2);
        let c = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
        let f = Array1::from_shape_fn(4, |_| r.random_range(-1.0..1.0));
        let sd = semi_dual(f.view(), &mu, &nu, &c, 0.2).unwrap();
        for _ in 0..10 {
            let g = &sd.g + &Array1::from_shape_fn(5, |_| r.random_range(-0.5..0.5));
            assert!(sd.value >= dual_objective(f.view(), g.view(), &mu, &nu, &c, 0.2).unwrap() - 1e-12);
        }
    }
}

#[test]
fn near_lp_cost_at_small_epsilon() {
    let mut r = rng(3);
    for _ in 0..5 {
        let mu = random_measure(&mut r, 4, 2);
        let nu = random_measure(&mut r, 4, 2);
        let c = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
        let res = sinkhorn_solve(&mu, &nu, &c, &SinkhornConfig::new(0.01).unwrap()).unwrap();
        assert!(res.converged);
        let (lp, _) = lp_oracle_small(&mu, &nu, &c).unwrap();
        let ent = res.plan.transport_cost(&c).unwrap();
        assert!((ent - lp).abs() <= 0.05 * lp, "entropic {ent} vs exact {lp}");
    }
}

#[test]
fn converged_fixed_point() {
    let mut r = rng(4);
    let mu = random_measure(&mut r, 6, 3);
    let nu = random_measure(&mut r, 7, 3);
    let c = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
    let eps = 0.1;
    let res = sinkhorn_solve(&mu, &nu, &c, &SinkhornConfig::new(eps).unwrap()).unwrap();
    assert!(res.converged && res.final_marginal_error <= 1e-9);
    let g = g_from_f(res.potentials.f.view(), &mu, &nu, &c, eps).unwrap();
    assert!((&g - &res.potentials.g).iter().all(|d| d.abs() <= 1e-9));
    let grad = dual_objective_grad_f(res.potentials.f.view(), &mu, &nu, &c, eps).unwrap();
    assert!(grad.iter().all(|d| d.abs() <= 1e-8));
    let rebuilt = plan_from_potentials(&res.potentials, &c).unwrap().to_dense();
    assert!((&rebuilt - &res.plan.to_dense()).iter().all(|d| d.abs() <= 1e-12));
}

#[test]
fn solver_is_bit_deterministic() {
    let mut r = rng(5);
    let mu = random_measure(&mut r, 20, 2);
    let nu = random_measure(&mut r, 30, 2);
    let c = build_cost_matrix(&mu, &nu, CostFamily::Euclidean).unwrap();
    let cfg = SinkhornConfig::new(0.05).unwrap();
    let a = sinkhorn_solve(&mu, &nu, &c, &cfg).unwrap();
    let b = sinkhorn_solve(&mu, &nu, &c, &cfg).unwrap();
    assert_eq!(a.potentials, b.potentials);
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.iterations_used, b.iterations_used);
}

#[test]
fn small_epsilon_does_not_overflow() {
    let mut r = rng(6);
    let mu = random_measure(&mut r, 15, 3);
    let nu = random_measure(&mut r, 15, 3);
    let c = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
    let res = sinkhorn_solve(&mu, &nu, &c, &SinkhornConfig::new(0.005).unwrap()).unwrap();
    assert!(res.plan.to_dense().iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(res.converged);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(7);
    for _ in 0..20 {
        let mu = random_measure(&mut r, 5, 2);
        let nu = random_measure(&mut r, 6, 2);
        let c = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
        let eps = 0.1;
        let f = Array1::from_shape_fn(5, |_| r.random_range(-0.5..0.5));
        let grad = dual_objective_grad_f(f.view(), &mu, &nu, &c, eps).unwrap();
        let h = 1e-5;
        for i in 0..5 {
            let (mut fp, mut fm) = (f.clone(), f.clone());
            fp[i] += h;
            fm[i] -= h;
            let jp = semi_dual(fp.view(), &mu, &nu, &c, eps).unwrap().value;
            let jm = semi_dual(fm.view(), &mu, &nu, &c, eps).unwrap().value;
            let fd = (jp - jm) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * grad[i].abs().max(1e-3), "{fd} vs {}", grad[i]);
        }
    }
}

proptest! {
    #[test]
    fn column_marginals_after_g_update(
        seed in 0u64..10_000,
        n in 1usize..8,
        m in 1usize..8,
        eps in 0.01f64..2.0,
        scale in 0.0f64..5.0,
    ) {
        let mut r = rng(seed);
        let mu = random_measure(&mut r, n, 2);
        let nu = random_measure(&mut r, m, 2);
        let c = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
        let f = Array1::from_shape_fn(n, |_| scale * r.random_range(-1.0..1.0));
        let g = g_from_f(f.view(), &mu, &nu, &c, eps).unwrap();
        let plan = plan_from_potentials(&Potentials::new(f, g, eps).unwrap(), &c).unwrap();
        for (s, b) in plan.col_sums().iter().zip(nu.weights()) {
            prop_assert!((s - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn shifts_cancel(seed in 0u64..10_000, s in -5.0f64..5.0, eps in 0.05f64..1.0) {
        let mut r = rng(seed);
        let mu = random_measure(&mut r, 4, 2);
        let nu = random_measure(&mut r, 3, 2);
        let c = build_cost_matrix(&mu, &nu, CostFamily::SqEuclidean).unwrap();
        let f = Array1::from_shape_fn(4, |_| r.random_range(-1.0..1.0));
        let g = Array1::from_shape_fn(3, |_| r.random_range(-1.0..1.0));
        let base = dual_objective(f.view(), g.view(), &mu, &nu, &c, eps).unwrap();
        let shifted = dual_objective((&f + s).view(), (&g - s).view(), &mu, &nu, &c, eps).unwrap();
        prop_assert!(rel_err(base, shifted) <= 1e-12 || (base - shifted).abs() <= 1e-12);
        let p0 = plan_from_potentials(&Potentials::new(f.clone(), g.clone(), eps).unwrap(), &c).unwrap().to_dense();
        let p1 = plan_from_potentials(&Potentials::new(&f + s, &g - s, eps).unwrap(), &c).unwrap().to_dense();
        for (a, b) in p0.iter().zip(p1.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        }
    }

    #[test]
    fn forced_single_pair(cost in 0.0f64..3.0, eps in 0.01f64..2.0) {
        let mut r = rng(0);
        let mu = random_measure(&mut r, 1, 1);
        let nu = random_measure(&mut r, 1, 1);
        let c = CostMatrix::from_array(ndarray::array![[cost]]).unwrap();
        let res = sinkhorn_solve(&mu, &nu, &c, &SinkhornConfig::new(eps).unwrap()).unwrap();
        prop_assert!((res.plan.to_dense()[[0, 0]] - 1.0).abs() <= 1e-12);
        prop_assert!((res.potentials.f[0] + res.potentials.g[0] - cost).abs() <= 1e-12 * cost.max(1.0));
    }
}

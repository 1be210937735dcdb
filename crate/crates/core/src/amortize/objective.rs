//! Objective-based amortization: ascent on the mean entropic semi-dual
//! `J(f) = D(f, g_from_f(f))` with `f = X omega`.
//!
//! By the envelope property `dJ/df = a - P 1`, so `dJ/domega = X^T (a - P 1)`.
//! Features and kernels are computed once per pair and reused by every step.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{AmortizedModel, TrainMeta, TrainedBy, TrainingSet};
use crate::error::{AotError, Result};
use crate::measures::{build_cost_matrix, CostFamily, DiscreteMeasure};
use crate::rng::stream_rng;
use crate::slicing::{sliced_features, ProjectionSet};

/// Largest `max C / eps` for which the Gibbs kernel stays comfortably normal.
const KERNEL_MAX_EXPONENT: f64 = 500.0;
/// Column sums below this fall back to the log-domain evaluation.
const KERNEL_MIN_SUM: f64 = 1e-280;

/// Cached per-pair data for semi-dual evaluation.
#[derive(Debug, Clone)]
pub struct PairProblem {
    /// `n x L` features.
    pub x: Array2<f64>,
    alpha: Array1<f64>,
    beta: Array1<f64>,
    log_beta: Array1<f64>,
    /// Costs stored column-major (`m x n`).
    cost_t: Array2<f64>,
    /// `exp(-C / eps)` as `m x n`, when it cannot underflow.
    kernel_t: Option<Array2<f64>>,
    eps: f64,
}

impl PairProblem {
    pub fn new(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        cost: CostFamily,
        x: Array2<f64>,
        eps: f64,
    ) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(AotError::EpsilonNonPositive(eps));
        }
        if x.nrows() != mu.len() {
            return Err(AotError::DimensionMismatch { expected: mu.len(), got: x.nrows() });
        }
        let c = build_cost_matrix(mu, nu, cost)?;
        let cost_t = c.values().t().as_standard_layout().into_owned();
        let cmax = cost_t.iter().copied().fold(0.0, f64::max);
        let kernel_t = (cmax / eps <= KERNEL_MAX_EXPONENT).then(|| cost_t.mapv(|v| (-v / eps).exp()));
        Ok(Self {
            x,
            alpha: mu.weights().clone(),
            beta: nu.weights().clone(),
            log_beta: nu.weights().mapv(f64::ln),
            cost_t,
            kernel_t,
            eps,
        })
    }

    pub fn from_pair(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        cost: CostFamily,
        pset: &ProjectionSet,
        eps: f64,
    ) -> Result<Self> {
        let feats = sliced_features(mu, nu, cost, pset)?;
        Self::new(mu, nu, cost, feats.x, eps)
    }

    /// Semi-dual value and `dJ/df` at `f`.
    pub fn semi_dual(&self, f: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
        if let Some(out) = self.kernel_semi_dual(f) {
            return out;
        }
        self.log_semi_dual(f)
    }

    fn kernel_semi_dual(&self, f: ArrayView1<'_, f64>) -> Option<(f64, Array1<f64>)> {
        let k = self.kernel_t.as_ref()?;
        let eps = self.eps;
        let fmax = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let u = f.mapv(|v| ((v - fmax) / eps).exp());
        let s = k.dot(&u);
        if s.iter().any(|v| !(*v >= KERNEL_MIN_SUM) || !v.is_finite()) {
            return None;
        }
        let w = &self.beta / &s;
        let row_mass = k.t().dot(&w) * &u;
        let g_dot_b: f64 = s
            .iter()
            .zip(self.log_beta.iter())
            .zip(self.beta.iter())
            .map(|((sj, lb), b)| b * (eps * lb - fmax - eps * sj.ln()))
            .sum();
        let value = f.dot(&self.alpha) + g_dot_b - eps * row_mass.sum();
        Some((value, &self.alpha - &row_mass))
    }

    fn log_semi_dual(&self, f: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
        let eps = self.eps;
        let n = f.len();
        let mut row_mass = Array1::<f64>::zeros(n);
        let mut z = vec![0.0; n];
        let mut g_dot_b = 0.0;
        for (j, col) in self.cost_t.outer_iter().enumerate() {
            let mut mx = f64::NEG_INFINITY;
            for ((zi, fi), cij) in z.iter_mut().zip(f.iter()).zip(col.iter()) {
                *zi = (fi - cij) / eps;
                mx = mx.max(*zi);
            }
            let mut s = 0.0;
            for zi in z.iter_mut() {
                *zi = (*zi - mx).exp();
                s += *zi;
            }
            let lse = mx + s.ln();
            g_dot_b += self.beta[j] * (eps * self.log_beta[j] - eps * lse);
            let scale = self.beta[j] / s;
            for (r, e) in row_mass.iter_mut().zip(&z) {
                *r += scale * e;
            }
        }
        let value = f.dot(&self.alpha) + g_dot_b - eps * row_mass.sum();
        (value, &self.alpha - &row_mass)
    }
}

/// Mean semi-dual over `batch` and its gradient in `omega`.
pub fn batch_objective(
    problems: &[PairProblem],
    batch: &[usize],
    omega: &Array1<f64>,
) -> Result<(f64, Array1<f64>)> {
    if batch.is_empty() {
        return Err(AotError::InvalidConfig("empty batch".into()));
    }
    let parts: Vec<(f64, Array1<f64>)> = batch
        .par_iter()
        .map(|&k| {
            let p = &problems[k];
            let f = p.x.dot(omega);
            let (value, grad_f) = p.semi_dual(f.view());
            (value, p.x.t().dot(&grad_f))
        })
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    let mut grad = Array1::zeros(omega.len());
    for (v, g) in parts {
        value += v;
        grad += &g;
    }
    value *= scale;
    grad *= scale;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(AotError::NonFinite(format!("semi-dual objective {value} or its gradient")));
    }
    Ok((value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OaConfig {
    pub lr: f64,
    pub iters: usize,
    /// Mini-batch size; `None` uses the full set when it has at most 64 pairs.
    pub batch: Option<usize>,
    pub seed: u64,
}

impl Default for OaConfig {
    fn default() -> Self {
        Self { lr: 1e-3, iters: 5000, batch: None, seed: 0 }
    }
}

impl OaConfig {
    fn batch_size(&self, m: usize) -> Result<usize> {
        let b = self.batch.unwrap_or(if m <= 64 { m } else { 64 });
        if b == 0 || b > m {
            return Err(AotError::InvalidConfig(format!("batch {b} for {m} pairs")));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone)]
pub struct OaOutcome {
    /// Best iterate by mean training objective.
    pub omega: Array1<f64>,
    pub best_objective: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Adam ascent from `omega = 0`, returning the best iterate seen.
pub fn oa_optimize(problems: &[PairProblem], cfg: &OaConfig) -> Result<OaOutcome> {
    if problems.is_empty() {
        return Err(AotError::InvalidSpec("no training pairs".into()));
    }
    if cfg.iters == 0 || !(cfg.lr > 0.0) {
        return Err(AotError::InvalidConfig("iters must be >= 1 and lr > 0".into()));
    }
    let m = problems.len();
    let l = problems[0].x.ncols();
    if let Some(p) = problems.iter().find(|p| p.x.ncols() != l) {
        return Err(AotError::DimensionMismatch { expected: l, got: p.x.ncols() });
    }
    let batch = cfg.batch_size(m)?;
    let full: Vec<usize> = (0..m).collect();
    let full_batch = batch == m;

    let mut omega = Array1::<f64>::zeros(l);
    let mut adam = super::Adam::new(l, cfg.lr);
    let (initial_objective, _) = batch_objective(problems, &full, &omega)?;
    let mut best = (initial_objective, omega.clone());

    let mut order = full.clone();
    let mut cursor = m;
    let mut epoch = 0u64;
    for _ in 0..cfg.iters {
        let (value, grad) = if full_batch {
            batch_objective(problems, &full, &omega)?
        } else {
            if cursor >= m {
                if epoch > 0 {
                    let (v, _) = batch_objective(problems, &full, &omega)?;
                    if v > best.0 {
                        best = (v, omega.clone());
                    }
                }
                order.shuffle(&mut stream_rng(cfg.seed, epoch));
                epoch += 1;
                cursor = 0;
            }
            let end = (cursor + batch).min(m);
            let out = batch_objective(problems, &order[cursor..end], &omega)?;
            cursor = end;
            (f64::NEG_INFINITY, out.1)
        };
        if value > best.0 {
            best = (value, omega.clone());
        }
        adam.ascend(&mut omega, &grad);
    }
    let (final_objective, _) = batch_objective(problems, &full, &omega)?;
    if final_objective > best.0 {
        best = (final_objective, omega.clone());
    }
    Ok(OaOutcome { omega: best.1, best_objective: best.0, initial_objective, final_objective })
}

pub fn oa_fit(train: &TrainingSet, pset: &ProjectionSet, cfg: &OaConfig) -> Result<AmortizedModel> {
    let start = Instant::now();
    let problems: Vec<PairProblem> = train
        .pairs
        .par_iter()
        .map(|(mu, nu)| PairProblem::from_pair(mu, nu, train.cost, pset, train.epsilon))
        .collect::<Result<_>>()?;
    let outcome = oa_optimize(&problems, cfg)?;
    let mut model = AmortizedModel::new(
        outcome.omega,
        pset.clone(),
        train.cost,
        train.epsilon,
        0.0,
        TrainedBy::Oa,
    )?;
    model.train_meta = TrainMeta {
        pairs_used: train.len(),
        pairs_skipped: 0,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(model)
}

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::{recenter, AmortizedModel, TrainMeta, TrainedBy, TrainingSet};
use crate::error::{AotError, Result};
use crate::measures::{build_cost_matrix, Potentials};
use crate::sinkhorn::{sinkhorn_solve, SinkhornConfig, SinkhornResult};
use crate::slicing::{sliced_features, ProjectionSet};

const JITTER: f64 = 1e-10;
const REFINE_STEPS: usize = 2;

/// Running sums `sum X^T X` and `sum X^T Y` over training pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RaAccumulator {
    pub gram: Array2<f64>,
    pub moment: Array1<f64>,
    pub pairs_seen: usize,
}

impl RaAccumulator {
    pub fn new(l: usize) -> Self {
        Self { gram: Array2::zeros((l, l)), moment: Array1::zeros(l), pairs_seen: 0 }
    }

    pub fn add(&mut self, x: &Array2<f64>, y: &Array1<f64>) -> Result<()> {
        let l = self.moment.len();
        if x.ncols() != l {
            return Err(AotError::DimensionMismatch { expected: l, got: x.ncols() });
        }
        if x.nrows() != y.len() {
            return Err(AotError::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        self.gram += &x.t().dot(x);
        self.moment += &x.t().dot(y);
        self.pairs_seen += 1;
        Ok(())
    }

    /// `gram + lambda * M * I`.
    pub fn system(&self, ridge_lambda: f64) -> Array2<f64> {
        let mut a = self.gram.clone();
        let shift = ridge_lambda * self.pairs_seen as f64;
        a.diag_mut().mapv_inplace(|v| v + shift);
        a
    }

    /// `|(gram + lambda M I) omega - moment|_2`.
    pub fn residual(&self, omega: &Array1<f64>, ridge_lambda: f64) -> f64 {
        let r = self.system(ridge_lambda).dot(omega) - &self.moment;
        r.dot(&r).sqrt()
    }

    /// Solves the regularized normal equations by Cholesky, retrying with a
    /// small diagonal jitter, then polishes with iterative refinement.
    pub fn solve(&self, ridge_lambda: f64) -> Result<Array1<f64>> {
        if !(ridge_lambda >= 0.0) {
            return Err(AotError::InvalidConfig(format!("ridge lambda {ridge_lambda}")));
        }
        if self.pairs_seen == 0 {
            return Err(AotError::NoConvergedPairs);
        }
        let l = self.moment.len();
        let a_nd = self.system(ridge_lambda);
        let a = DMatrix::from_fn(l, l, |i, j| a_nd[[i, j]]);
        let b = DVector::from_iterator(l, self.moment.iter().copied());
        let chol = match a.clone().cholesky() {
            Some(c) => c,
            None => {
                let jittered = &a + DMatrix::identity(l, l) * JITTER;
                jittered.cholesky().ok_or(AotError::SingularGram)?
            }
        };
        let mut x = chol.solve(&b);
        for _ in 0..REFINE_STEPS {
            let r = &b - &a * &x;
            x += chol.solve(&r);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AotError::SingularGram);
        }
        Ok(Array1::from_iter(x.iter().copied()))
    }
}

/// Converged Sinkhorn solutions for every pair (in pair order).
pub fn ground_truths(train: &TrainingSet, cfg: &SinkhornConfig) -> Result<Vec<SinkhornResult>> {
    train
        .pairs
        .par_iter()
        .map(|(mu, nu)| {
            let c = build_cost_matrix(mu, nu, train.cost)?;
            sinkhorn_solve(mu, nu, &c, cfg)
        })
        .collect()
}

/// Ridge regression of Sinkhorn source potentials onto sliced features.
pub fn ra_fit(train: &TrainingSet, pset: &ProjectionSet, ridge_lambda: f64) -> Result<AmortizedModel> {
    let start = Instant::now();
    let cfg = SinkhornConfig::new(train.epsilon)?;
    let truths: Vec<Option<Potentials>> = ground_truths(train, &cfg)?
        .into_iter()
        .map(|r| r.converged.then_some(r.potentials))
        .collect();
    let mut model = ra_fit_with_truth(train, &truths, pset, ridge_lambda)?;
    model.train_meta.wall_seconds = start.elapsed().as_secs_f64();
    Ok(model)
}

/// [`ra_fit`] with precomputed ground truth; `None` entries are skipped.
pub fn ra_fit_with_truth(
    train: &TrainingSet,
    truths: &[Option<Potentials>],
    pset: &ProjectionSet,
    ridge_lambda: f64,
) -> Result<AmortizedModel> {
    let start = Instant::now();
    if truths.len() != train.len() {
        return Err(AotError::ShapeMismatch(format!(
            "{} ground truths for {} pairs",
            truths.len(),
            train.len()
        )));
    }
    let blocks: Vec<Option<(Array2<f64>, Array1<f64>)>> = train
        .pairs
        .par_iter()
        .zip(truths.par_iter())
        .map(|((mu, nu), truth)| -> Result<_> {
            let Some(pot) = truth else { return Ok(None) };
            let feats = sliced_features(mu, nu, train.cost, pset)?;
            Ok(Some((feats.x, recenter(&pot.f, mu.weights()))))
        })
        .collect::<Result<_>>()?;

    let mut acc = RaAccumulator::new(pset.len());
    let mut skipped = 0;
    for (k, block) in blocks.iter().enumerate() {
        match block {
            Some((x, y)) => acc.add(x, y)?,
            None => {
                log::warn!("pair {k}: ground truth did not converge, excluded from regression");
                skipped += 1;
            }
        }
    }
    let omega = acc.solve(ridge_lambda)?;
    let mut model = AmortizedModel::new(
        omega,
        pset.clone(),
        train.cost,
        train.epsilon,
        ridge_lambda,
        TrainedBy::Ra,
    )?;
    model.train_meta = TrainMeta {
        pairs_used: acc.pairs_seen,
        pairs_skipped: skipped,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(model)
}

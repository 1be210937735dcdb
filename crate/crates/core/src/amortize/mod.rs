//! Linear amortized potentials built on sliced features.
//!
//! A model predicts the source potential of a new pair as `X(mu, nu) * omega`,
//! where `X` is the sliced feature matrix and `omega` has one coefficient per
//! projection. The coefficients are fitted either by ridge regression onto
//! Sinkhorn potentials ([`ra_fit`]) or by gradient ascent on the entropic
//! semi-dual ([`oa_fit`]). The target potential `g` and the plan are then
//! recovered with one softmin pass, so column marginals hold by construction.

mod adam;
mod objective;
mod ridge;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{AotError, Result};
use crate::measures::{
    build_cost_matrix, plan_from_potentials, CostFamily, DiscreteMeasure, Potentials, TransportPlan,
};
use crate::sinkhorn::g_from_f;
use crate::slicing::{sliced_features, ProjectionSet};

pub use adam::Adam;
pub use objective::{batch_objective, oa_fit, oa_optimize, OaConfig, OaOutcome, PairProblem};
pub use ridge::{ground_truths, ra_fit, ra_fit_with_truth, RaAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainedBy {
    Ra,
    Oa,
}

impl TrainedBy {
    pub fn tag(self) -> u8 {
        match self {
            TrainedBy::Ra => 0,
            TrainedBy::Oa => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(TrainedBy::Ra),
            1 => Some(TrainedBy::Oa),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmortizedModel {
    pub omega: Array1<f64>,
    pub pset: ProjectionSet,
    pub cost: CostFamily,
    pub epsilon: f64,
    pub ridge_lambda: f64,
    pub trained_by: TrainedBy,
    pub train_meta: TrainMeta,
}

impl AmortizedModel {
    pub fn new(
        omega: Array1<f64>,
        pset: ProjectionSet,
        cost: CostFamily,
        epsilon: f64,
        ridge_lambda: f64,
        trained_by: TrainedBy,
    ) -> Result<Self> {
        if omega.len() != pset.len() {
            return Err(AotError::DimensionMismatch { expected: pset.len(), got: omega.len() });
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(AotError::EpsilonNonPositive(epsilon));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(AotError::NonFinite("model coefficient".into()));
        }
        Ok(Self {
            omega,
            pset,
            cost,
            epsilon,
            ridge_lambda,
            trained_by,
            train_meta: TrainMeta::default(),
        })
    }
}

/// Measure pairs sharing a ground cost and regularization.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pairs: Vec<(DiscreteMeasure, DiscreteMeasure)>,
    pub cost: CostFamily,
    pub epsilon: f64,
}

impl TrainingSet {
    pub fn new(
        pairs: Vec<(DiscreteMeasure, DiscreteMeasure)>,
        cost: CostFamily,
        epsilon: f64,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(AotError::InvalidSpec("training set is empty".into()));
        }
        if !(epsilon > 0.0) {
            return Err(AotError::EpsilonNonPositive(epsilon));
        }
        for (mu, nu) in &pairs {
            check_pair(mu, nu, cost)?;
        }
        Ok(Self { pairs, cost, epsilon })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The first `count` pairs.
    pub fn head(&self, count: usize) -> Result<Self> {
        Self::new(self.pairs[..count.min(self.len())].to_vec(), self.cost, self.epsilon)
    }
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: CostFamily) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(AotError::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if cost == CostFamily::SphericalGeodesic
        && (mu.domain() != crate::measures::Domain::UnitSphere
            || nu.domain() != crate::measures::Domain::UnitSphere)
    {
        return Err(AotError::DomainMismatch("geodesic cost needs spherical measures".into()));
    }
    Ok(())
}

/// `X * omega`.
pub fn predict_from_features(x: &Array2<f64>, omega: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if x.ncols() != omega.len() {
        return Err(AotError::DimensionMismatch { expected: x.ncols(), got: omega.len() });
    }
    Ok(x.dot(&omega))
}

pub fn predict_potential(
    model: &AmortizedModel,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<Array1<f64>> {
    let feats = sliced_features(mu, nu, model.cost, &model.pset)?;
    predict_from_features(&feats.x, model.omega.view())
}

/// Plan induced by the predicted `f` and its best-response `g`.
pub fn predict_plan(
    model: &AmortizedModel,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<TransportPlan> {
    let f = predict_potential(model, mu, nu)?;
    plan_from_source_potential(f, mu, nu, model.cost, model.epsilon)
}

pub fn plan_from_source_potential(
    f: Array1<f64>,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: CostFamily,
    epsilon: f64,
) -> Result<TransportPlan> {
    let c = build_cost_matrix(mu, nu, cost)?;
    let g = g_from_f(f.view(), mu, nu, &c, epsilon)?;
    plan_from_potentials(&Potentials::new(f, g, epsilon)?, &c)
}

/// Re-centres a potential to zero `weights`-mean.
pub(crate) fn recenter(f: &Array1<f64>, weights: &Array1<f64>) -> Array1<f64> {
    let mean = f.dot(weights);
    f.mapv(|v| v - mean)
}

//! Evaluation protocol: plan RMSE against converged Sinkhorn, timing, sweeps,
//! displacement interpolation and coupling sampling.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amortize::{
    oa_fit, predict_plan, ra_fit_with_truth, AmortizedModel, OaConfig, TrainingSet,
};
use crate::baselines::min_swgg_plan;
use crate::error::{AotError, Result};
use crate::measures::{build_cost_matrix, CostFamily, DiscreteMeasure, Domain, Potentials, TransportPlan};
use crate::rng::stream_rng;
use crate::sinkhorn::{sinkhorn_solve, SinkhornConfig, SinkhornResult};
use crate::slicing::{sample_projections, ProjectionFamily, ProjectionSet};
use crate::tasks::{generate_split, TaskSpec};

/// Entries below this are dropped by [`interpolate`] by default.
pub const DEFAULT_MASS_FLOOR: f64 = 1e-12;

/// What inference time covers, echoed in every report.
pub const INFER_TIMING_NOTE: &str =
    "inference time covers sliced features, linear prediction, one g-update and plan assembly; ground truth excluded";

/// Entrywise RMSE `sqrt(mean_ij (P_ij - Q_ij)^2)` over all `n * m` entries.
pub fn plan_rmse(predicted: &TransportPlan, truth: &TransportPlan) -> Result<f64> {
    if predicted.shape() != truth.shape() {
        return Err(AotError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            predicted.shape(),
            truth.shape()
        )));
    }
    let (a, b) = (predicted.to_dense(), truth.to_dense());
    let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq / a.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Ra,
    Oa,
    MinSwgg,
    Sinkhorn,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ra" | "ra-ot" => Some(Method::Ra),
            "oa" | "oa-ot" => Some(Method::Oa),
            "minswgg" | "min-swgg" | "swgg" => Some(Method::MinSwgg),
            "sinkhorn" => Some(Method::Sinkhorn),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Ra => "ra",
            Method::Oa => "oa",
            Method::MinSwgg => "minswgg-random",
            Method::Sinkhorn => "sinkhorn",
        }
    }
}

/// How test plans are produced.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Amortized(&'a AmortizedModel),
    MinSwgg { pset: &'a ProjectionSet, cost: CostFamily },
    Sinkhorn(SinkhornConfig),
}

impl Predictor<'_> {
    pub fn method(&self) -> Method {
        match self {
            Predictor::Amortized(m) => match m.trained_by {
                crate::amortize::TrainedBy::Ra => Method::Ra,
                crate::amortize::TrainedBy::Oa => Method::Oa,
            },
            Predictor::MinSwgg { .. } => Method::MinSwgg,
            Predictor::Sinkhorn(_) => Method::Sinkhorn,
        }
    }

    pub fn predict(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: CostFamily) -> Result<TransportPlan> {
        match self {
            Predictor::Amortized(model) => predict_plan(model, mu, nu),
            Predictor::MinSwgg { pset, cost } => Ok(min_swgg_plan(mu, nu, *cost, pset)?.plan),
            Predictor::Sinkhorn(cfg) => {
                let c = build_cost_matrix(mu, nu, cost)?;
                Ok(sinkhorn_solve(mu, nu, &c, cfg)?.plan)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_index: usize,
    pub rmse: f64,
    pub infer_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub records: Vec<PairRecord>,
    /// Test pairs whose ground truth did not converge.
    pub dropped: usize,
    pub rmse_mean: f64,
    /// Population standard deviation.
    pub rmse_std: f64,
    pub train_s: f64,
    pub infer_ms_mean: f64,
    pub infer_ms_std: f64,
    pub timing_note: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<TaskSpec>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_records(method: Method, records: Vec<PairRecord>, dropped: usize, train_s: f64) -> Self {
        let mut report = Self {
            method: method.name().to_string(),
            records,
            dropped,
            rmse_mean: 0.0,
            rmse_std: 0.0,
            train_s,
            infer_ms_mean: 0.0,
            infer_ms_std: 0.0,
            timing_note: INFER_TIMING_NOTE.to_string(),
            spec: None,
        };
        report.recompute();
        report
    }

    /// Refreshes the aggregates from `records`.
    pub fn recompute(&mut self) {
        (self.rmse_mean, self.rmse_std) = mean_std(self.records.iter().map(|r| r.rmse));
        (self.infer_ms_mean, self.infer_ms_std) = mean_std(self.records.iter().map(|r| r.infer_ms));
    }
}

/// Converged Sinkhorn plans for `pairs`; `None` where the solver did not converge.
pub fn truth_plans(pairs: &TrainingSet, cfg: &SinkhornConfig) -> Result<Vec<Option<SinkhornResult>>> {
    pairs
        .pairs
        .par_iter()
        .map(|(mu, nu)| {
            let c = build_cost_matrix(mu, nu, pairs.cost)?;
            let r = sinkhorn_solve(mu, nu, &c, cfg)?;
            Ok(r.converged.then_some(r))
        })
        .collect()
}

pub fn evaluate(predictor: &Predictor<'_>, test: &TrainingSet, cfg: &SinkhornConfig) -> Result<EvalReport> {
    let truths: Vec<Option<TransportPlan>> =
        truth_plans(test, cfg)?.into_iter().map(|r| r.map(|r| r.plan)).collect();
    evaluate_with_truth(predictor, test, &truths, 0.0)
}

/// Scores `predictor` against precomputed truth plans. Predictions run one
/// at a time so the recorded inference times are not inflated by contention.
pub fn evaluate_with_truth(
    predictor: &Predictor<'_>,
    test: &TrainingSet,
    truths: &[Option<TransportPlan>],
    train_s: f64,
) -> Result<EvalReport> {
    if truths.len() != test.len() {
        return Err(AotError::ShapeMismatch(format!("{} truths for {} pairs", truths.len(), test.len())));
    }
    let mut records = Vec::with_capacity(test.len());
    let mut dropped = 0;
    for (k, ((mu, nu), truth)) in test.pairs.iter().zip(truths).enumerate() {
        let Some(truth) = truth else {
            dropped += 1;
            continue;
        };
        let start = Instant::now();
        let plan = predictor.predict(mu, nu, test.cost)?;
        let infer_ms = start.elapsed().as_secs_f64() * 1e3;
        records.push(PairRecord { pair_index: k, rmse: plan_rmse(&plan, truth)?, infer_ms });
    }
    Ok(EvalReport::from_records(predictor.method(), records, dropped, train_s))
}

/// Displacement interpolation `sum_ij P_ij delta_{(1-t) x_i + t y_j}`.
pub fn interpolate(
    plan: &TransportPlan,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: CostFamily,
    t: f64,
    mass_floor: f64,
) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(AotError::BadT(t));
    }
    if cost != CostFamily::SqEuclidean {
        return Err(AotError::WrongCostFamily { expected: "squared Euclidean" });
    }
    if plan.shape() != (mu.len(), nu.len()) {
        return Err(AotError::ShapeMismatch(format!("plan {:?}", plan.shape())));
    }
    if mu.dim() != nu.dim() {
        return Err(AotError::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let kept: Vec<(usize, usize, f64)> =
        plan.triples().into_iter().filter(|&(_, _, mass)| mass > mass_floor).collect();
    if kept.is_empty() {
        return Err(AotError::DegeneratePlan);
    }
    let d = mu.dim();
    let mut atoms = Array2::zeros((kept.len(), d));
    for (mut row, &(i, j, _)) in atoms.outer_iter_mut().zip(&kept) {
        let (x, y) = (mu.atom(i), nu.atom(j));
        for k in 0..d {
            row[k] = (1.0 - t) * x[k] + t * y[k];
        }
    }
    let weights = kept.iter().map(|t| t.2).collect();
    DiscreteMeasure::new(atoms, weights, Domain::Euclidean)
}

/// `k` i.i.d. index pairs drawn from the plan by inverse CDF.
pub fn sample_coupling(plan: &TransportPlan, k: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(AotError::InvalidConfig("k must be >= 1".into()));
    }
    let dense = plan.to_dense();
    let m = dense.ncols();
    let mut cdf = Vec::with_capacity(dense.len());
    let mut acc = 0.0;
    for v in dense.iter() {
        acc += v;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(AotError::DegeneratePlan);
    }
    let mut rng = stream_rng(seed, 0);
    Ok((0..k)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let mut idx = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
            // skip zero-mass cells sharing the same cumulative value
            while dense.as_slice().is_some_and(|s| s[idx] == 0.0) && idx + 1 < cdf.len() {
                idx += 1;
            }
            (idx / m, idx % m)
        })
        .collect())
}

/// Hyperparameters shared by every cell of a sweep.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub split_ratio: f64,
    pub ridge_lambda: f64,
    pub oa: OaConfig,
    pub projection: ProjectionFamily,
    pub projection_seed: u64,
    pub sinkhorn: SinkhornConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchCell {
    pub l: usize,
    pub m: usize,
    pub method: Method,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchTable {
    pub task: String,
    pub spec: TaskSpec,
    pub cells: Vec<BenchCell>,
}

/// Columns of the sweep CSV that carry wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 3] = ["train_s", "infer_ms_mean", "infer_ms_std"];

impl BenchTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "task,method,L,M,n_test,n_dropped,rmse_mean,rmse_std,train_s,infer_ms_mean,infer_ms_std,status\n",
        );
        for c in &self.cells {
            match &c.report {
                Some(r) => out.push_str(&format!(
                    "{},{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},ok\n",
                    self.task,
                    c.method.name(),
                    c.l,
                    c.m,
                    r.records.len(),
                    r.dropped,
                    r.rmse_mean,
                    r.rmse_std,
                    r.train_s,
                    r.infer_ms_mean,
                    r.infer_ms_std
                )),
                None => out.push_str(&format!(
                    "{},{},{},{},0,0,,,,,,\"failed: {}\"\n",
                    self.task,
                    c.method.name(),
                    c.l,
                    c.m,
                    c.error.as_deref().unwrap_or("").replace('"', "'")
                )),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| AotError::Malformed(e.to_string()))
    }

    pub fn cell(&self, l: usize, m: usize, method: Method) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.l == l && c.m == m && c.method == method)
    }
}

/// Trains and evaluates every `(L, M, method)` cell on one shared task pool.
///
/// Sinkhorn ground truth is computed once per pair and reused across cells;
/// its cost is charged to RA training time. Projection sets are prefixes of
/// one sample, so smaller `L` use the leading directions of larger ones.
pub fn bench_sweep(
    spec: &TaskSpec,
    l_values: &[usize],
    m_values: &[usize],
    methods: &[Method],
    cfg: &BenchConfig,
) -> Result<BenchTable> {
    if l_values.is_empty() || m_values.is_empty() || methods.is_empty() {
        return Err(AotError::InvalidConfig("sweep grids must be non-empty".into()));
    }
    let (train_pool, test) = generate_split(spec, cfg.split_ratio)?;
    let max_m = *m_values.iter().max().unwrap();
    if max_m > train_pool.len() || m_values.contains(&0) {
        return Err(AotError::InvalidConfig(format!(
            "M values must lie in 1..={} (train split size)",
            train_pool.len()
        )));
    }
    let max_l = *l_values.iter().max().unwrap();
    let dim = train_pool.pairs[0].0.dim();
    let full_pset = sample_projections(cfg.projection, max_l, dim, cfg.projection_seed)?;

    let test_truth: Vec<Option<TransportPlan>> =
        truth_plans(&test, &cfg.sinkhorn)?.into_iter().map(|r| r.map(|r| r.plan)).collect();

    let needs_train_truth = methods.contains(&Method::Ra);
    let train_set = train_pool.head(max_m)?;
    let (train_truth, truth_secs): (Vec<Option<Potentials>>, Vec<f64>) = if needs_train_truth {
        train_set
            .pairs
            .par_iter()
            .map(|(mu, nu)| -> Result<_> {
                let start = Instant::now();
                let c = build_cost_matrix(mu, nu, train_set.cost)?;
                let r = sinkhorn_solve(mu, nu, &c, &cfg.sinkhorn)?;
                Ok((r.converged.then_some(r.potentials), start.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip()
    } else {
        (Vec::new(), Vec::new())
    };

    let mut cells = Vec::new();
    for &l in l_values {
        let pset = full_pset.prefix(l)?;
        for &m in m_values {
            let train = train_set.head(m)?;
            for &method in methods {
                let outcome = run_cell(method, &pset, &train, &test, &test_truth, &train_truth, &truth_secs, cfg);
                let (report, error) = match outcome {
                    Ok(mut r) => {
                        r.spec = Some(spec.clone());
                        (Some(r), None)
                    }
                    Err(e) => {
                        log::warn!("cell L={l} M={m} {}: {e}", method.name());
                        (None, Some(e.to_string()))
                    }
                };
                cells.push(BenchCell { l, m, method, report, error });
            }
        }
    }
    Ok(BenchTable { task: spec.family.name().to_string(), spec: spec.clone(), cells })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    method: Method,
    pset: &ProjectionSet,
    train: &TrainingSet,
    test: &TrainingSet,
    test_truth: &[Option<TransportPlan>],
    train_truth: &[Option<Potentials>],
    truth_secs: &[f64],
    cfg: &BenchConfig,
) -> Result<EvalReport> {
    let m = train.len();
    match method {
        Method::Ra => {
            let model = ra_fit_with_truth(train, &train_truth[..m], pset, cfg.ridge_lambda)?;
            let train_s = model.train_meta.wall_seconds + truth_secs[..m].iter().sum::<f64>();
            evaluate_with_truth(&Predictor::Amortized(&model), test, test_truth, train_s)
        }
        Method::Oa => {
            let model = oa_fit(train, pset, &cfg.oa)?;
            evaluate_with_truth(&Predictor::Amortized(&model), test, test_truth, model.train_meta.wall_seconds)
        }
        Method::MinSwgg => evaluate_with_truth(
            &Predictor::MinSwgg { pset, cost: train.cost },
            test,
            test_truth,
            0.0,
        ),
        Method::Sinkhorn => evaluate_with_truth(&Predictor::Sinkhorn(cfg.sinkhorn), test, test_truth, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rmse_cases() {
        let p = TransportPlan::dense(array![[1.0, 0.0], [0.0, 0.0]], 0.1).unwrap();
        let q = TransportPlan::dense(array![[0.5, 0.0], [0.0, 0.5]], 0.1).unwrap();
        assert_eq!(plan_rmse(&q, &q).unwrap(), 0.0);
        assert!((plan_rmse(&p, &q).unwrap() - 0.353553).abs() < 1e-6);
        let shifted = TransportPlan::dense(q.to_dense() + 0.01, 0.1).unwrap();
        assert!((plan_rmse(&shifted, &q).unwrap() - 0.01).abs() < 1e-15);
        let r = TransportPlan::dense(Array2::zeros((2, 3)), 0.1).unwrap();
        assert!(plan_rmse(&p, &r).is_err());
    }

    #[test]
    fn interpolation_endpoints() {
        let mu = DiscreteMeasure::new(array![[0.0, 0.0], [1.0, 0.0]], array![0.4, 0.6], Domain::Euclidean).unwrap();
        let nu = DiscreteMeasure::new(array![[0.0, 2.0], [3.0, 3.0]], array![0.5, 0.5], Domain::Euclidean).unwrap();
        let plan = TransportPlan::dense(array![[0.3, 0.1], [0.2, 0.4]], 0.1).unwrap();
        let start = interpolate(&plan, &mu, &nu, CostFamily::SqEuclidean, 0.0, DEFAULT_MASS_FLOOR).unwrap();
        let mass_at = |m: &DiscreteMeasure, p: [f64; 2]| -> f64 {
            m.atoms()
                .outer_iter()
                .zip(m.weights())
                .filter(|(a, _)| a[0] == p[0] && a[1] == p[1])
                .map(|(_, w)| *w)
                .sum()
        };
        assert!((mass_at(&start, [0.0, 0.0]) - 0.4).abs() < 1e-12);
        assert!((mass_at(&start, [1.0, 0.0]) - 0.6).abs() < 1e-12);
        let end = interpolate(&plan, &mu, &nu, CostFamily::SqEuclidean, 1.0, DEFAULT_MASS_FLOOR).unwrap();
        assert!((mass_at(&end, [0.0, 2.0]) - 0.5).abs() < 1e-12);
        let mid = interpolate(&plan, &mu, &nu, CostFamily::SqEuclidean, 0.5, DEFAULT_MASS_FLOOR).unwrap();
        assert!((mass_at(&mid, [2.0, 1.5]) - 0.4).abs() < 1e-12);
        assert!(matches!(
            interpolate(&plan, &mu, &nu, CostFamily::SqEuclidean, 1.5, 0.0),
            Err(AotError::BadT(_))
        ));
        assert!(matches!(
            interpolate(&plan, &mu, &nu, CostFamily::Euclidean, 0.5, 0.0),
            Err(AotError::WrongCostFamily { .. })
        ));
    }

    #[test]
    fn identity_interpolation_returns_measure() {
        let mu = DiscreteMeasure::new(array![[0.0], [1.0], [5.0]], array![0.2, 0.3, 0.5], Domain::Euclidean).unwrap();
        let plan = TransportPlan::dense(Array2::from_diag(mu.weights()), 0.0).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(interpolate(&plan, &mu, &mu, CostFamily::SqEuclidean, t, DEFAULT_MASS_FLOOR).unwrap(), mu);
        }
    }

    #[test]
    fn coupling_sampling() {
        let point = TransportPlan::dense(array![[0.0, 0.0], [1.0, 0.0]], 0.0).unwrap();
        assert!(sample_coupling(&point, 100, 1).unwrap().iter().all(|&p| p == (1, 0)));
        let uniform = TransportPlan::dense(Array2::from_elem((2, 2), 0.25), 0.0).unwrap();
        let draws = sample_coupling(&uniform, 100_000, 42).unwrap();
        for cell in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let freq = draws.iter().filter(|&&d| d == cell).count() as f64 / 1e5;
            assert!((freq - 0.25).abs() <= 0.01, "{cell:?}: {freq}");
        }
        assert_eq!(draws, sample_coupling(&uniform, 100_000, 42).unwrap());
        let empty = TransportPlan::dense(Array2::zeros((2, 2)), 0.0).unwrap();
        assert!(matches!(sample_coupling(&empty, 3, 0), Err(AotError::DegeneratePlan)));
    }

    #[test]
    fn report_aggregates() {
        let recs = vec![
            PairRecord { pair_index: 0, rmse: 1.0, infer_ms: 2.0 },
            PairRecord { pair_index: 1, rmse: 3.0, infer_ms: 4.0 },
        ];
        let r = EvalReport::from_records(Method::Ra, recs, 1, 0.5);
        assert_eq!((r.rmse_mean, r.rmse_std), (2.0, 1.0));
        assert_eq!((r.infer_ms_mean, r.infer_ms_std), (3.0, 1.0));
        let mut again = r.clone();
        again.recompute();
        assert_eq!(again, r);
    }
}

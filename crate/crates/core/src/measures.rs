//! Discrete measures, ground costs, transport plans and dual potentials.
//!
//! Every other module consumes these types. They are immutable once built and
//! validate their invariants at construction, so downstream code can assume
//! positive normalized weights and finite nonnegative costs.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{AotError, Result};

/// Tolerance on atom norms for measures declared on the unit sphere.
pub const SPHERE_TOL: f64 = 1e-9;

/// Weights whose sum is this close to 1 are kept bit-for-bit.
const MASS_KEEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Euclidean,
    UnitSphere,
}

impl Domain {
    pub fn tag(self) -> u8 {
        match self {
            Domain::Euclidean => 0,
            Domain::UnitSphere => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Domain::Euclidean),
            1 => Some(Domain::UnitSphere),
            _ => None,
        }
    }
}

/// A finitely supported probability measure `sum_i w_i delta_{x_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Array2<f64>,
    weights: Array1<f64>,
    domain: Domain,
}

impl DiscreteMeasure {
    /// Builds a measure, rescaling the weights to unit total mass.
    ///
    /// Weights that already sum to 1 within `1e-12` are stored untouched so
    /// that save/load cycles are bit-exact.
    pub fn new(atoms: Array2<f64>, weights: Array1<f64>, domain: Domain) -> Result<Self> {
        let n = atoms.nrows();
        if n == 0 {
            return Err(AotError::EmptyMeasure);
        }
        if atoms.ncols() == 0 {
            return Err(AotError::BadDimension("atoms must have at least one coordinate".into()));
        }
        if weights.len() != n {
            return Err(AotError::DimensionMismatch { expected: n, got: weights.len() });
        }
        if let Some(bad) = atoms.iter().find(|v| !v.is_finite()) {
            return Err(AotError::NonFinite(format!("atom coordinate {bad}")));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(AotError::PositivityViolation { index, value });
            }
        }
        if domain == Domain::UnitSphere {
            for (index, row) in atoms.outer_iter().enumerate() {
                let norm = row.dot(&row).sqrt();
                if (norm - 1.0).abs() > SPHERE_TOL {
                    return Err(AotError::NotOnSphere { index, norm });
                }
            }
        }
        let total: f64 = weights.sum();
        let weights = if (total - 1.0).abs() <= MASS_KEEP_TOL { weights } else { weights / total };
        Ok(Self { atoms, weights, domain })
    }

    /// Uniform weights on the given atoms.
    pub fn uniform(atoms: Array2<f64>, domain: Domain) -> Result<Self> {
        let n = atoms.nrows();
        let w = Array1::from_elem(n, 1.0 / n.max(1) as f64);
        Self::new(atoms, w, domain)
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atom(&self, i: usize) -> ArrayView1<'_, f64> {
        self.atoms.row(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostFamily {
    SqEuclidean,
    Euclidean,
    SphericalGeodesic,
}

impl CostFamily {
    pub fn tag(self) -> u8 {
        match self {
            CostFamily::SqEuclidean => 0,
            CostFamily::Euclidean => 1,
            CostFamily::SphericalGeodesic => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(CostFamily::SqEuclidean),
            1 => Some(CostFamily::Euclidean),
            2 => Some(CostFamily::SphericalGeodesic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CostFamily::SqEuclidean => "sqeuclidean",
            CostFamily::Euclidean => "euclidean",
            CostFamily::SphericalGeodesic => "geodesic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sqeuclidean" | "sq_euclidean" | "squared" => Some(CostFamily::SqEuclidean),
            "euclidean" => Some(CostFamily::Euclidean),
            "geodesic" | "spherical_geodesic" | "sphericalgeodesic" => {
                Some(CostFamily::SphericalGeodesic)
            }
            _ => None,
        }
    }

    /// Ground cost between two points of equal dimension.
    pub fn eval(self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
        match self {
            CostFamily::SqEuclidean => x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum(),
            CostFamily::Euclidean => {
                x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
            CostFamily::SphericalGeodesic => x.dot(&y).clamp(-1.0, 1.0).acos(),
        }
    }
}

/// Dense `n x m` matrix of ground costs `C_ij = c(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    /// Wraps a precomputed matrix after checking entries are finite and `>= 0`.
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(AotError::NonFinite(format!("cost entry {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.0.nrows(), self.0.ncols())
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

pub fn build_cost_matrix(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: CostFamily,
) -> Result<CostMatrix> {
    if mu.dim() != nu.dim() {
        return Err(AotError::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if cost == CostFamily::SphericalGeodesic
        && (mu.domain() != Domain::UnitSphere || nu.domain() != Domain::UnitSphere)
    {
        return Err(AotError::DomainMismatch(
            "geodesic cost requires both measures on the unit sphere".into(),
        ));
    }
    let (n, m) = (mu.len(), nu.len());
    let mut c = Array2::zeros((n, m));
    for (i, mut row) in c.outer_iter_mut().enumerate() {
        let x = mu.atom(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = cost.eval(x, nu.atom(j));
        }
    }
    Ok(CostMatrix(c))
}

/// Storage for a coupling: a full matrix, or the sparse support of a 1D plan.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanRepr {
    Dense(Array2<f64>),
    SparseChain(Vec<(usize, usize, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    epsilon: f64,
    repr: PlanRepr,
}

impl TransportPlan {
    pub fn dense(values: Array2<f64>, epsilon: f64) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(AotError::NonFinite(format!("plan entry {v}")));
        }
        Ok(Self { rows: values.nrows(), cols: values.ncols(), epsilon, repr: PlanRepr::Dense(values) })
    }

    /// Sparse plan from `(row, col, mass)` triples; unregularized (`epsilon = 0`).
    pub fn sparse_chain(rows: usize, cols: usize, triples: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, mass) in &triples {
            if i >= rows || j >= cols {
                return Err(AotError::ShapeMismatch(format!(
                    "triple ({i}, {j}) outside {rows}x{cols}"
                )));
            }
            if !(mass >= 0.0) || !mass.is_finite() {
                return Err(AotError::NonFinite(format!("plan mass {mass}")));
            }
        }
        Ok(Self { rows, cols, epsilon: 0.0, repr: PlanRepr::SparseChain(triples) })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn repr(&self) -> &PlanRepr {
        &self.repr
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.repr, PlanRepr::SparseChain(_))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.repr {
            PlanRepr::Dense(p) => p.clone(),
            PlanRepr::SparseChain(t) => {
                let mut p = Array2::zeros((self.rows, self.cols));
                for &(i, j, mass) in t {
                    p[[i, j]] += mass;
                }
                p
            }
        }
    }

    /// Nonzero entries as `(row, col, mass)` triples in row-major order for
    /// dense plans, storage order for sparse ones (zero-mass pivots dropped).
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        match &self.repr {
            PlanRepr::Dense(p) => p
                .indexed_iter()
                .filter(|(_, v)| **v != 0.0)
                .map(|((i, j), v)| (i, j, *v))
                .collect(),
            PlanRepr::SparseChain(t) => t.iter().copied().filter(|t| t.2 != 0.0).collect(),
        }
    }

    pub fn row_sums(&self) -> Array1<f64> {
        match &self.repr {
            PlanRepr::Dense(p) => p.sum_axis(Axis(1)),
            PlanRepr::SparseChain(t) => {
                let mut r = Array1::zeros(self.rows);
                for &(i, _, mass) in t {
                    r[i] += mass;
                }
                r
            }
        }
    }

    pub fn col_sums(&self) -> Array1<f64> {
        match &self.repr {
            PlanRepr::Dense(p) => p.sum_axis(Axis(0)),
            PlanRepr::SparseChain(t) => {
                let mut c = Array1::zeros(self.cols);
                for &(_, j, mass) in t {
                    c[j] += mass;
                }
                c
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.repr {
            PlanRepr::Dense(p) => p.sum(),
            PlanRepr::SparseChain(t) => t.iter().map(|t| t.2).sum(),
        }
    }

    /// `<C, P>`.
    pub fn transport_cost(&self, c: &CostMatrix) -> Result<f64> {
        if c.shape() != self.shape() {
            return Err(AotError::ShapeMismatch(format!(
                "plan {:?} vs cost {:?}",
                self.shape(),
                c.shape()
            )));
        }
        let cv = c.values();
        Ok(match &self.repr {
            PlanRepr::Dense(p) => p.iter().zip(cv.iter()).map(|(p, c)| p * c).sum(),
            PlanRepr::SparseChain(t) => t.iter().map(|&(i, j, mass)| mass * cv[[i, j]]).sum(),
        })
    }
}

/// Dual pair `(f, g)` attached to the regularization it solves.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub epsilon: f64,
}

impl Potentials {
    pub fn new(f: Array1<f64>, g: Array1<f64>, epsilon: f64) -> Result<Self> {
        if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(AotError::NonFinite("potential entry".into()));
        }
        if !(epsilon >= 0.0) {
            return Err(AotError::EpsilonNonPositive(epsilon));
        }
        Ok(Self { f, g, epsilon })
    }
}

/// `P_ij = exp((f_i + g_j - C_ij) / eps)`.
pub fn plan_from_potentials(pot: &Potentials, c: &CostMatrix) -> Result<TransportPlan> {
    let eps = pot.epsilon;
    if !(eps > 0.0) {
        return Err(AotError::EpsilonNonPositive(eps));
    }
    let (n, m) = c.shape();
    if pot.f.len() != n || pot.g.len() != m {
        return Err(AotError::ShapeMismatch(format!(
            "potentials ({}, {}) vs cost {n}x{m}",
            pot.f.len(),
            pot.g.len()
        )));
    }
    let mut p = c.values().clone();
    for (i, mut row) in p.outer_iter_mut().enumerate() {
        let fi = pot.f[i];
        for (v, gj) in row.iter_mut().zip(pot.g.iter()) {
            *v = ((fi + gj - *v) / eps).exp();
        }
    }
    TransportPlan::dense(p, eps)
}

/// L1 marginal defects `(|P 1 - a|_1, |P^T 1 - b|_1)`.
pub fn marginal_errors(
    plan: &TransportPlan,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<(f64, f64)> {
    if plan.shape() != (mu.len(), nu.len()) {
        return Err(AotError::ShapeMismatch(format!(
            "plan {:?} vs measures ({}, {})",
            plan.shape(),
            mu.len(),
            nu.len()
        )));
    }
    let row = (&plan.row_sums() - mu.weights()).mapv(f64::abs).sum();
    let col = (&plan.col_sums() - nu.weights()).mapv(f64::abs).sum();
    Ok((row, col))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::{LN_2, PI};

    fn point(coords: &[f64], domain: Domain) -> DiscreteMeasure {
        let atoms = Array2::from_shape_vec((1, coords.len()), coords.to_vec()).unwrap();
        DiscreteMeasure::uniform(atoms, domain).unwrap()
    }

    #[test]
    fn cost_identity_and_pythagoras() {
        let a = point(&[0.0, 0.0], Domain::Euclidean);
        let b = point(&[3.0, 4.0], Domain::Euclidean);
        let c = build_cost_matrix(&a, &a, CostFamily::SqEuclidean).unwrap();
        assert_eq!(c.values(), &array![[0.0]]);
        let c = build_cost_matrix(&a, &b, CostFamily::SqEuclidean).unwrap();
        assert_eq!(c.values(), &array![[25.0]]);
        let c = build_cost_matrix(&a, &b, CostFamily::Euclidean).unwrap();
        assert_eq!(c.values(), &array![[5.0]]);
    }

    #[test]
    fn geodesic_antipodes_and_clamping() {
        let n = point(&[0.0, 0.0, 1.0], Domain::UnitSphere);
        let s = point(&[0.0, 0.0, -1.0], Domain::UnitSphere);
        let c = build_cost_matrix(&n, &s, CostFamily::SphericalGeodesic).unwrap();
        assert_eq!(c.values()[[0, 0]], PI);
        // an inner product of 1 + 1e-16 must not produce NaN
        let x = array![0.6, 0.8, 0.0];
        let y = x.mapv(|v| v * (1.0 + 1e-12));
        let v = CostFamily::SphericalGeodesic.eval(x.view(), y.view());
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn geodesic_rejects_euclidean_domain() {
        let a = point(&[1.0, 0.0, 0.0], Domain::Euclidean);
        let b = point(&[1.0, 0.0, 0.0], Domain::UnitSphere);
        assert!(matches!(
            build_cost_matrix(&a, &b, CostFamily::SphericalGeodesic),
            Err(AotError::DomainMismatch(_))
        ));
        let c = point(&[1.0, 0.0], Domain::Euclidean);
        assert!(matches!(
            build_cost_matrix(&a, &c, CostFamily::SqEuclidean),
            Err(AotError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn measure_invariants() {
        let atoms = array![[0.0], [1.0]];
        let m = DiscreteMeasure::new(atoms.clone(), array![2.0, 6.0], Domain::Euclidean).unwrap();
        assert_eq!(m.weights(), &array![0.25, 0.75]);
        assert!(matches!(
            DiscreteMeasure::new(atoms.clone(), array![1.0, 0.0], Domain::Euclidean),
            Err(AotError::PositivityViolation { index: 1, .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(array![[0.5, 0.5]], array![1.0], Domain::UnitSphere),
            Err(AotError::NotOnSphere { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::uniform(Array2::zeros((0, 2)), Domain::Euclidean),
            Err(AotError::EmptyMeasure)
        ));
    }

    #[test]
    fn plan_from_potentials_simple_cases() {
        let c = CostMatrix::from_array(array![[1.7]]).unwrap();
        let pot = Potentials::new(array![0.3], array![1.4], 0.37).unwrap();
        let p = plan_from_potentials(&pot, &c).unwrap().to_dense();
        assert_eq!(p[[0, 0]], 1.0);

        let eps = 0.2;
        let c = CostMatrix::from_array(array![[eps * LN_2]]).unwrap();
        let pot = Potentials::new(array![0.0], array![0.0], eps).unwrap();
        let p = plan_from_potentials(&pot, &c).unwrap().to_dense();
        assert!((p[[0, 0]] - 0.5).abs() < 1e-15);

        let pot = Potentials::new(array![0.0], array![0.0], 0.0).unwrap();
        assert!(matches!(plan_from_potentials(&pot, &c), Err(AotError::EpsilonNonPositive(_))));
        let pot = Potentials::new(array![0.0, 1.0], array![0.0], 1.0).unwrap();
        assert!(matches!(plan_from_potentials(&pot, &c), Err(AotError::ShapeMismatch(_))));
    }

    #[test]
    fn marginal_errors_product_and_zero() {
        let mu = DiscreteMeasure::new(array![[0.0], [1.0]], array![0.3, 0.7], Domain::Euclidean)
            .unwrap();
        let nu = DiscreteMeasure::new(array![[0.0], [2.0], [3.0]], array![0.2, 0.5, 0.3], Domain::Euclidean)
            .unwrap();
        let a = mu.weights().view().insert_axis(Axis(1));
        let b = nu.weights().view().insert_axis(Axis(0));
        let product = TransportPlan::dense(a.dot(&b), 1.0).unwrap();
        let (r, c) = marginal_errors(&product, &mu, &nu).unwrap();
        assert!(r <= 1e-15 && c <= 1e-15);

        let zero = TransportPlan::dense(Array2::zeros((2, 3)), 1.0).unwrap();
        let (r, c) = marginal_errors(&zero, &mu, &nu).unwrap();
        assert!((r - 1.0).abs() < 1e-15 && (c - 1.0).abs() < 1e-15);

        let wrong = TransportPlan::dense(Array2::zeros((3, 3)), 1.0).unwrap();
        assert!(matches!(marginal_errors(&wrong, &mu, &nu), Err(AotError::ShapeMismatch(_))));
    }

    #[test]
    fn sparse_dense_conversion_preserves_triples() {
        let t = vec![(0, 0, 0.25), (0, 1, 0.25), (1, 1, 0.0), (1, 2, 0.5)];
        let plan = TransportPlan::sparse_chain(2, 3, t.clone()).unwrap();
        let dense = TransportPlan::dense(plan.to_dense(), 0.0).unwrap();
        let back: Vec<_> = t.into_iter().filter(|t| t.2 != 0.0).collect();
        assert_eq!(dense.triples(), back);
        assert_eq!(plan.triples(), back);
    }
}

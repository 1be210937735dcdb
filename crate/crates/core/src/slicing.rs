//! Projection families and the sliced-potential feature matrix.
//!
//! Each direction `theta_l` maps both measures to the line, where the exact 1D
//! problem is solved; the resulting source potential, re-centred to zero
//! `a`-weighted mean, becomes column `l` of the `n x L` feature matrix.

use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AotError, Result};
use crate::measures::{CostFamily, DiscreteMeasure, Domain};
use crate::ot1d::{solve_1d, OneDCost, OneDSolution, Projected1DMeasure};
use crate::rng::stream_rng;

/// Image of the projection pole under stereographic projection.
pub const POLE_SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionFamily {
    /// `P_theta(x) = <theta, x>`.
    LinearSphere,
    /// Rotate `theta` to the north pole, project stereographically, keep the
    /// radius signed by the first rotated coordinate.
    Stereographic,
}

impl ProjectionFamily {
    pub fn tag(self) -> u8 {
        match self {
            ProjectionFamily::LinearSphere => 0,
            ProjectionFamily::Stereographic => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ProjectionFamily::LinearSphere),
            1 => Some(ProjectionFamily::Stereographic),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "linearsphere" | "linear_sphere" => Some(ProjectionFamily::LinearSphere),
            "stereographic" | "stereo" => Some(ProjectionFamily::Stereographic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProjectionFamily::LinearSphere => "linear",
            ProjectionFamily::Stereographic => "stereographic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    family: ProjectionFamily,
    thetas: Array2<f64>,
    seed: Option<u64>,
}

impl ProjectionSet {
    /// Wraps explicit directions; each row must have unit norm within `1e-9`.
    pub fn from_thetas(family: ProjectionFamily, thetas: Array2<f64>) -> Result<Self> {
        Self::validate(family, &thetas)?;
        Ok(Self { family, thetas, seed: None })
    }

    fn validate(family: ProjectionFamily, thetas: &Array2<f64>) -> Result<()> {
        if thetas.nrows() == 0 {
            return Err(AotError::BadDimension("need at least one projection".into()));
        }
        let d = thetas.ncols();
        if d == 0 || (family == ProjectionFamily::Stereographic && d < 3) {
            return Err(AotError::BadDimension(format!(
                "{} projections are not defined for d = {d}",
                family.name()
            )));
        }
        for row in thetas.outer_iter() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(AotError::BadDimension(format!("direction with norm {norm}")));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> ProjectionFamily {
        self.family
    }

    pub fn thetas(&self) -> &Array2<f64> {
        &self.thetas
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.thetas.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.thetas.ncols()
    }

    /// First `l` directions; matches `sample_projections` with the same seed.
    pub fn prefix(&self, l: usize) -> Result<Self> {
        if l == 0 || l > self.len() {
            return Err(AotError::BadDimension(format!("prefix {l} of {} directions", self.len())));
        }
        Ok(Self {
            family: self.family,
            thetas: self.thetas.slice(ndarray::s![..l, ..]).to_owned(),
            seed: self.seed,
        })
    }
}

/// `L` i.i.d. uniform directions on `S^{d-1}`; direction `l` only depends on
/// `(seed, l)`, so sets with the same seed are nested.
pub fn sample_projections(
    family: ProjectionFamily,
    count: usize,
    d: usize,
    seed: u64,
) -> Result<ProjectionSet> {
    if count == 0 {
        return Err(AotError::BadDimension("L must be >= 1".into()));
    }
    if d == 0 || (family == ProjectionFamily::Stereographic && d < 3) {
        return Err(AotError::BadDimension(format!("{} projections need d >= {}", family.name(),
            if family == ProjectionFamily::Stereographic { 3 } else { 1 })));
    }
    let mut thetas = Array2::<f64>::zeros((count, d));
    for (l, mut row) in thetas.outer_iter_mut().enumerate() {
        let mut rng = stream_rng(seed, l as u64);
        loop {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row.mapv_inplace(|v| v / norm);
                break;
            }
        }
    }
    Ok(ProjectionSet { family, thetas, seed: Some(seed) })
}

/// 1D ground cost used on every slice for a given ambient cost.
pub fn slice_cost(cost: CostFamily) -> OneDCost {
    match cost {
        CostFamily::Euclidean => OneDCost::Abs,
        CostFamily::SqEuclidean | CostFamily::SphericalGeodesic => OneDCost::Square,
    }
}

fn stereographic_coordinate(theta: &[f64], x: &[f64]) -> f64 {
    let d = theta.len();
    // Householder reflection sending theta to e_d.
    let mut v: Vec<f64> = theta.to_vec();
    v[d - 1] -= 1.0;
    let vv: f64 = v.iter().map(|a| a * a).sum();
    let u: Vec<f64> = if vv < 1e-24 {
        x.to_vec()
    } else {
        let scale = 2.0 * v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / vv;
        x.iter().zip(&v).map(|(xi, vi)| xi - scale * vi).collect()
    };
    let z = u[d - 1];
    let radial = u[..d - 1].iter().map(|a| a * a).sum::<f64>().sqrt();
    let sign = if u[0] < 0.0 { -1.0 } else { 1.0 };
    let denom = 1.0 - z;
    if denom <= 0.0 {
        return sign * POLE_SENTINEL;
    }
    let r = radial / denom;
    if r.is_finite() && r < POLE_SENTINEL {
        sign * r
    } else {
        sign * POLE_SENTINEL
    }
}

/// Projects every atom of `measure` with direction `l`; weights pass through.
pub fn project(pset: &ProjectionSet, l: usize, measure: &DiscreteMeasure) -> Result<Projected1DMeasure> {
    if measure.dim() != pset.dim() {
        return Err(AotError::DimensionMismatch { expected: pset.dim(), got: measure.dim() });
    }
    if l >= pset.len() {
        return Err(AotError::BadDimension(format!("projection index {l} out of {}", pset.len())));
    }
    let theta = pset.thetas.row(l);
    let positions = match pset.family {
        ProjectionFamily::LinearSphere => measure.atoms().dot(&theta),
        ProjectionFamily::Stereographic => {
            if measure.domain() != Domain::UnitSphere {
                return Err(AotError::DomainMismatch(
                    "stereographic projection needs measures on the unit sphere".into(),
                ));
            }
            let t = theta.to_vec();
            measure
                .atoms()
                .outer_iter()
                .map(|x| stereographic_coordinate(&t, &x.to_vec()))
                .collect::<Array1<f64>>()
        }
    };
    Projected1DMeasure::new(positions, measure.weights().clone())
}

/// `n x L` matrix of re-centred sliced source potentials.
#[derive(Debug, Clone)]
pub struct SlicedFeatures {
    pub x: Array2<f64>,
    pub per_slice_solutions: Option<Vec<OneDSolution>>,
}

fn slice_column(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    h: OneDCost,
    pset: &ProjectionSet,
    l: usize,
) -> Result<(Array1<f64>, OneDSolution)> {
    let a = project(pset, l, mu)?;
    let b = project(pset, l, nu)?;
    let sol = solve_1d(&a, &b, h)?;
    let mean = sol.f.dot(mu.weights());
    Ok((sol.f.mapv(|v| v - mean), sol))
}

fn check_compatible(mu: &DiscreteMeasure, nu: &DiscreteMeasure, pset: &ProjectionSet) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(AotError::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if mu.dim() != pset.dim() {
        return Err(AotError::DimensionMismatch { expected: pset.dim(), got: mu.dim() });
    }
    Ok(())
}

pub fn sliced_features(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: CostFamily,
    pset: &ProjectionSet,
) -> Result<SlicedFeatures> {
    build_features(mu, nu, cost, pset, false)
}

/// Same as [`sliced_features`] but keeps every per-slice 1D solution.
pub fn sliced_features_with_solutions(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: CostFamily,
    pset: &ProjectionSet,
) -> Result<SlicedFeatures> {
    build_features(mu, nu, cost, pset, true)
}

fn build_features(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: CostFamily,
    pset: &ProjectionSet,
    keep: bool,
) -> Result<SlicedFeatures> {
    check_compatible(mu, nu, pset)?;
    let h = slice_cost(cost);
    let columns: Vec<(Array1<f64>, OneDSolution)> = (0..pset.len())
        .into_par_iter()
        .map(|l| slice_column(mu, nu, h, pset, l))
        .collect::<Result<_>>()?;
    let mut x = Array2::zeros((mu.len(), pset.len()));
    for (mut dst, (col, _)) in x.axis_iter_mut(Axis(1)).zip(&columns) {
        dst.assign(col);
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(AotError::NonFinite(format!("sliced feature {v}")));
    }
    let per_slice_solutions = keep.then(|| columns.into_iter().map(|(_, s)| s).collect());
    Ok(SlicedFeatures { x, per_slice_solutions })
}

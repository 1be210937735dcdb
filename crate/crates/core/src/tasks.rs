//! Seeded synthetic meta-distributions of measure pairs.
//!
//! * `Grid2D`: both measures live on a shared `k x k` grid of `[0,1]^2`; weights
//!   are mixtures of 2-4 Gaussian bumps (image-like intensities).
//! * `SphereSupplyDemand`: supply is uniform on 2-3 random caps of `S^2`,
//!   demand follows a mixture of 3-6 von Mises-Fisher densities.
//! * `ColorClouds`: uniform points of the RGB cube with Dirichlet(1) weights.
//!
//! Pair `k` is drawn from its own random stream, so any pair can be
//! regenerated in isolation and parallel generation is deterministic.

use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amortize::TrainingSet;
use crate::error::{AotError, Result};
use crate::io::read_measure;
use crate::measures::{CostFamily, DiscreteMeasure, Domain};
use crate::rng::stream_rng;
use crate::slicing::ProjectionFamily;

/// Lower bound applied to grid weights before renormalization.
pub const GRID_WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskFamily {
    Grid2D,
    SphereSupplyDemand,
    ColorClouds,
}

impl TaskFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid2d" | "grid" => Some(TaskFamily::Grid2D),
            "sphere" | "spheresupplydemand" | "sphere_supply_demand" => {
                Some(TaskFamily::SphereSupplyDemand)
            }
            "color" | "colorclouds" | "color_clouds" => Some(TaskFamily::ColorClouds),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::Grid2D => "grid2d",
            TaskFamily::SphereSupplyDemand => "sphere",
            TaskFamily::ColorClouds => "color",
        }
    }

    pub fn default_epsilon(self) -> f64 {
        match self {
            TaskFamily::Grid2D => 0.1,
            TaskFamily::SphereSupplyDemand => 0.5,
            TaskFamily::ColorClouds => 0.005,
        }
    }

    pub fn default_cost(self) -> CostFamily {
        match self {
            TaskFamily::SphereSupplyDemand => CostFamily::SphericalGeodesic,
            _ => CostFamily::SqEuclidean,
        }
    }

    pub fn default_projection(self) -> ProjectionFamily {
        match self {
            TaskFamily::SphereSupplyDemand => ProjectionFamily::Stereographic,
            _ => ProjectionFamily::LinearSphere,
        }
    }

    fn default_sizes(self) -> (usize, usize) {
        match self {
            TaskFamily::Grid2D => (196, 196),
            TaskFamily::SphereSupplyDemand => (100, 1000),
            TaskFamily::ColorClouds => (500, 500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub family: TaskFamily,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub cost: CostFamily,
    pub seed: u64,
    pub count: usize,
}

impl TaskSpec {
    /// Spec with the family's default sizes, cost and regularization.
    pub fn new(family: TaskFamily, count: usize, seed: u64) -> Self {
        let (n, m) = family.default_sizes();
        Self {
            family,
            n,
            m,
            epsilon: family.default_epsilon(),
            cost: family.default_cost(),
            seed,
            count,
        }
    }

    pub fn with_sizes(mut self, n: usize, m: usize) -> Self {
        self.n = n;
        self.m = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AotError::InvalidSpec(msg));
        if self.count == 0 {
            return bad("count must be >= 1".into());
        }
        if self.n == 0 || self.m == 0 {
            return bad("measure sizes must be >= 1".into());
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        match self.family {
            TaskFamily::Grid2D => {
                let k = grid_side(self.n);
                if self.n != self.m || k * k != self.n {
                    return bad(format!("grid2d needs n = m = k^2, got n={} m={}", self.n, self.m));
                }
            }
            TaskFamily::SphereSupplyDemand => {
                if self.cost != CostFamily::SphericalGeodesic {
                    return bad("sphere task requires the geodesic cost".into());
                }
            }
            TaskFamily::ColorClouds => {}
        }
        if self.family != TaskFamily::SphereSupplyDemand && self.cost == CostFamily::SphericalGeodesic {
            return bad("geodesic cost requires the sphere task".into());
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        match self.family {
            TaskFamily::SphereSupplyDemand => Domain::UnitSphere,
            _ => Domain::Euclidean,
        }
    }
}

fn grid_side(n: usize) -> usize {
    let mut k = (n as f64).sqrt().round() as usize;
    while k * k > n {
        k -= 1;
    }
    k
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn grid_atoms(k: usize) -> Array2<f64> {
    let step = if k > 1 { 1.0 / (k - 1) as f64 } else { 0.0 };
    Array2::from_shape_fn((k * k, 2), |(p, c)| {
        let (row, col) = (p / k, p % k);
        if c == 0 {
            col as f64 * step
        } else {
            row as f64 * step
        }
    })
}

fn grid_weights(atoms: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let bumps = rng.random_range(2..=4);
    let params: Vec<(f64, f64, f64, f64)> = (0..bumps)
        .map(|_| {
            (
                uniform(rng, 0.15, 0.85),
                uniform(rng, 0.15, 0.85),
                uniform(rng, 0.08, 0.25),
                uniform(rng, 0.5, 1.5),
            )
        })
        .collect();
    let raw: Array1<f64> = atoms
        .outer_iter()
        .map(|p| {
            params
                .iter()
                .map(|&(cx, cy, s, w)| {
                    let d2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
                    w * (-d2 / (2.0 * s * s)).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let total = raw.sum();
    let floored = raw.mapv(|v| (v / total).max(GRID_WEIGHT_FLOOR));
    let total = floored.sum();
    floored / total
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-12 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

/// Orthonormal pair spanning the plane orthogonal to `c`.
fn tangent_frame(c: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if c[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = helper[0] * c[0] + helper[1] * c[1] + helper[2] * c[2];
    let mut e1 = [helper[0] - dot * c[0], helper[1] - dot * c[1], helper[2] - dot * c[2]];
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    let e2 = [
        c[1] * e1[2] - c[2] * e1[1],
        c[2] * e1[0] - c[0] * e1[2],
        c[0] * e1[1] - c[1] * e1[0],
    ];
    (e1, e2)
}

/// Point at polar height `w` (cosine of the angle to `c`) and azimuth `phi`.
fn point_around(c: [f64; 3], w: f64, phi: f64) -> [f64; 3] {
    let (e1, e2) = tangent_frame(c);
    let r = (1.0 - w * w).max(0.0).sqrt();
    let mut p = [0.0; 3];
    for k in 0..3 {
        p[k] = w * c[k] + r * (phi.cos() * e1[k] + phi.sin() * e2[k]);
    }
    let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / norm, p[1] / norm, p[2] / norm]
}

fn supply_measure(n: usize, rng: &mut ChaCha8Rng) -> Result<DiscreteMeasure> {
    let caps: Vec<([f64; 3], f64)> = (0..rng.random_range(2..=3))
        .map(|_| (random_unit(rng), uniform(rng, 0.4, 0.9)))
        .collect();
    let areas: Vec<f64> = caps.iter().map(|(_, r)| 1.0 - r.cos()).collect();
    let total: f64 = areas.iter().sum();
    let mut atoms = Array2::zeros((n, 3));
    for mut row in atoms.outer_iter_mut() {
        let mut pick = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < caps.len() && pick >= areas[k] {
            pick -= areas[k];
            k += 1;
        }
        let (center, radius) = caps[k];
        let w = uniform(rng, radius.cos(), 1.0);
        let p = point_around(center, w, uniform(rng, 0.0, std::f64::consts::TAU));
        row.assign(&Array1::from(p.to_vec()));
    }
    DiscreteMeasure::uniform(atoms, Domain::UnitSphere)
}

fn demand_measure(m: usize, rng: &mut ChaCha8Rng) -> Result<DiscreteMeasure> {
    let comps: Vec<([f64; 3], f64, f64)> = (0..rng.random_range(3..=6))
        .map(|_| (random_unit(rng), uniform(rng, 4.0, 20.0), uniform(rng, 0.5, 1.5)))
        .collect();
    let total: f64 = comps.iter().map(|c| c.2).sum();
    let density = |x: &[f64; 3]| -> f64 {
        comps
            .iter()
            .map(|(c, kappa, w)| {
                let dot = c[0] * x[0] + c[1] * x[1] + c[2] * x[2];
                let norm = kappa / (std::f64::consts::TAU * (1.0 - (-2.0 * kappa).exp()));
                (w / total) * norm * (kappa * (dot - 1.0)).exp()
            })
            .sum()
    };
    let mut atoms = Array2::zeros((m, 3));
    let mut weights = Array1::zeros(m);
    for (mut row, wt) in atoms.outer_iter_mut().zip(weights.iter_mut()) {
        let mut pick = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < comps.len() && pick >= comps[k].2 {
            pick -= comps[k].2;
            k += 1;
        }
        let (center, kappa, _) = comps[k];
        let u: f64 = rng.random();
        let w = 1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa;
        let p = point_around(center, w.clamp(-1.0, 1.0), uniform(rng, 0.0, std::f64::consts::TAU));
        *wt = density(&p).max(1e-300);
        row.assign(&Array1::from(p.to_vec()));
    }
    DiscreteMeasure::new(atoms, weights, Domain::UnitSphere)
}

fn color_measure(k: usize, rng: &mut ChaCha8Rng) -> Result<DiscreteMeasure> {
    let atoms = Array2::from_shape_fn((k, 3), |_| rng.random::<f64>());
    let weights: Array1<f64> = (0..k).map(|_| Exp1.sample(rng)).collect::<Array1<f64>>();
    let weights = weights.mapv(|v: f64| v.max(1e-12));
    DiscreteMeasure::new(atoms, weights, Domain::Euclidean)
}

/// Pair `index` of the task's meta-distribution.
pub fn generate_pair(spec: &TaskSpec, index: usize) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, index as u64);
    match spec.family {
        TaskFamily::Grid2D => {
            let atoms = grid_atoms(grid_side(spec.n));
            let a = grid_weights(&atoms, &mut rng);
            let b = grid_weights(&atoms, &mut rng);
            Ok((
                DiscreteMeasure::new(atoms.clone(), a, Domain::Euclidean)?,
                DiscreteMeasure::new(atoms, b, Domain::Euclidean)?,
            ))
        }
        TaskFamily::SphereSupplyDemand => {
            Ok((supply_measure(spec.n, &mut rng)?, demand_measure(spec.m, &mut rng)?))
        }
        TaskFamily::ColorClouds => Ok((color_measure(spec.n, &mut rng)?, color_measure(spec.m, &mut rng)?)),
    }
}

pub fn generate(spec: &TaskSpec) -> Result<TrainingSet> {
    spec.validate()?;
    let pairs = (0..spec.count)
        .into_par_iter()
        .map(|k| generate_pair(spec, k))
        .collect::<Result<Vec<_>>>()?;
    TrainingSet::new(pairs, spec.cost, spec.epsilon)
}

/// Index ranges of the train and test portions: the first `ratio` share of
/// pairs trains, the remainder tests.
pub fn split_indices(count: usize, ratio: f64) -> Result<(Range<usize>, Range<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) || count < 2 {
        return Err(AotError::InvalidSpec(format!("cannot split {count} pairs at ratio {ratio}")));
    }
    let n_train = ((count as f64 * ratio).round() as usize).clamp(1, count - 1);
    Ok((0..n_train, n_train..count))
}

/// Generated pool divided into train and test sets.
pub fn generate_split(spec: &TaskSpec, ratio: f64) -> Result<(TrainingSet, TrainingSet)> {
    let pool = generate(spec)?;
    let (train, test) = split_indices(pool.len(), ratio)?;
    assert!(train.end <= test.start, "train and test indices overlap");
    Ok((
        TrainingSet::new(pool.pairs[train].to_vec(), pool.cost, pool.epsilon)?,
        TrainingSet::new(pool.pairs[test].to_vec(), pool.cost, pool.epsilon)?,
    ))
}

/// Reads a pair of measure files and checks them against `cost`.
pub fn load_measures(
    path_mu: &Path,
    path_nu: &Path,
    cost: CostFamily,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let mu = read_measure(path_mu)?;
    let nu = read_measure(path_nu)?;
    if mu.dim() != nu.dim() {
        return Err(AotError::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if cost == CostFamily::SphericalGeodesic
        && (mu.domain() != Domain::UnitSphere || nu.domain() != Domain::UnitSphere)
    {
        return Err(AotError::DomainMismatch("geodesic cost needs spherical measures".into()));
    }
    Ok((mu, nu))
}

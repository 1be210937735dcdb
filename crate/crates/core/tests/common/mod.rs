#![allow(dead_code)]

use aot_core::measures::{DiscreteMeasure, Domain};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    aot_core::rng::stream_rng(seed, 0)
}

pub fn random_weights(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    let w = Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0));
    let s = w.sum();
    w / s
}

pub fn random_atoms(rng: &mut impl Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

pub fn random_measure(rng: &mut impl Rng, n: usize, d: usize) -> DiscreteMeasure {
    let atoms = random_atoms(rng, n, d);
    let w = random_weights(rng, n);
    DiscreteMeasure::new(atoms, w, Domain::Euclidean).unwrap()
}

pub fn uniform_measure(rng: &mut impl Rng, n: usize, d: usize) -> DiscreteMeasure {
    DiscreteMeasure::uniform(random_atoms(rng, n, d), Domain::Euclidean).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

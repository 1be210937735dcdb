//! Amortized entropic optimal transport with sliced features.
//!
//! Discrete measures, a log-domain Sinkhorn solver, exact 1D transport,
//! sliced feature maps, ridge-regression and objective-ascent training of a
//! linear potential predictor, the min-SWGG baseline, synthetic task
//! generators, binary formats and the evaluation protocol.

pub mod amortize;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod io;
pub mod measures;
pub mod ot1d;
pub mod rng;
pub mod sinkhorn;
pub mod slicing;
pub mod tasks;

pub use error::{AotError, ErrorKind, Result};
pub use measures::{
    build_cost_matrix, CostFamily, CostMatrix, DiscreteMeasure, Domain, Potentials, TransportPlan,
};
pub use sinkhorn::{sinkhorn_solve, SinkhornConfig, SinkhornResult};

//! Low-rank matrix recovery by recursive importance sketching.
//!
//! The crate is `no_std` compatible (with `alloc`); disable the default `std`
//! feature and enable `libm` for bare targets.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod apps;
pub mod baselines;
pub mod error;
pub mod factored;
pub mod gen;
pub mod linalg;
pub mod manifold;
pub mod math;
pub mod operator;
pub mod problem;
pub mod rip;
pub mod risro;
pub mod rng;
pub mod trace;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use operator::{DenseSensing, EntrySampling, RankOneSensing, SensingOperator};
pub use factored::{best_rank_r, FactoredMatrix};
pub use problem::ProblemInstance;
pub use trace::{SolveTrace, Status, StopMetric, StopRule};

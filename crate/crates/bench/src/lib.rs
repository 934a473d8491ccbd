//! Benchmark harness: seeded experiments, CSV traces, SVG charts and a
//! binary instance format for exact replay.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod instance;
pub mod plot;
pub mod report;
pub mod run;
pub mod spec;

pub use error::{BenchError, Result};
pub use spec::{Algorithm, Experiment, ExperimentSpec};

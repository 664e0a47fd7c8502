//! SDP relaxation of K-means for Gaussian mixtures: a consensus splitting
//! solver, the block dual certificate for exact recovery, reference baselines
//! and a Monte Carlo phase-diagram harness.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected; index loops
// over paired matrix rows read better than zipped iterators.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod certificate;
pub mod error;
pub mod experiments;
pub mod io;
mod kmeans;
pub mod linalg;
pub mod membership;
pub mod model_gen;
pub mod rng;
pub mod rounding;
pub mod solver;

pub use nalgebra;
pub use certificate::{CertificateReport, Tolerances};
pub use error::{Error, Result};
pub use experiments::{Method, PhaseGrid, PhaseRow};
pub use membership::Partition;
pub use model_gen::{CenterSet, Dataset, MixtureSpec, PlacementMode};
pub use rounding::RoundingConfig;
pub use solver::{AffinityMatrix, SolveStatus, SolverConfig, SolverResult};

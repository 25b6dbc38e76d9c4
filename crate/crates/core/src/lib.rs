//! Exact and Monte Carlo tools for the Gaussian approximation of linear
//! projections of high-temperature Ising models.
//!
//! * [`model`]: the model, validation, spectral and Dobrushin diagnostics.
//! * [`exact`]: Gray-code enumeration of moments, projections and samples.
//! * [`oracle`]: definition-level reference moments for small models.
//! * [`glauber`]: heat-bath dynamics and the monotone coupled pair.
//! * [`embedding`]: the Gaussian interpolant and its tilted conditional laws.
//! * [`bound`]: the covariance statistic, field supremum and error bound.
//! * [`wasserstein`]: 2-Wasserstein distances on the line.
//! * [`lattice`]: finite-range lattices, Dobrushin ferromagnets, experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bound;
pub mod embedding;
pub mod error;
pub mod exact;
pub mod glauber;
pub mod io;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod wasserstein;

pub use error::{Error, Result};
pub use exact::{DirectionVector, ExactEngine, MomentSummary, ProjectionPmf};
pub use model::{IsingModel, SpinConfig};

//! Spatial-indexing (SPIN) estimation and prediction for the spatial linear
//! model `y = X beta + e`, `var(e) = Sigma(theta)`.
//!
//! The observations are split into groups so that covariance parameters and
//! fixed effects can be estimated from a block-diagonal working covariance,
//! while the variance of the pooled fixed-effect estimator is computed under
//! the full covariance. Prediction uses a fixed number of nearest neighbours
//! with a single global `beta`.
//!
//! Modules:
//! - [`geometry`]: points, distances and a k-d tree for k-nearest queries.
//! - [`covariance`]: exponential and spherical models, dense Cholesky kernels.
//! - [`partition`]: random, k-means compact and mixed group assignments.
//! - [`estimate`]: partitioned REML, pooled GLS, variance estimators, dense oracle.
//! - [`predict`]: nearest-neighbour point kriging and grid block kriging.
//! - [`simulate`]: GEOSTAT and SUMSINE generators, response construction.
//! - [`evaluate`]: simulation metrics and the experiment runner.

pub mod covariance;
pub mod error;
pub mod estimate;
pub mod evaluate;
pub mod geometry;
pub mod optim;
pub mod partition;
pub mod predict;
pub mod simulate;

pub use covariance::{CovModel, Theta};
pub use error::{Result, SpinError};
pub use estimate::{FittedModel, SpatialDataset, VarianceMethod};
pub use geometry::{NeighborIndex, Point2D};
pub use partition::PartitionAssignment;

//! Stationary performance analysis of a token bucket filter fed by a
//! compound Poisson flow with discrete packet sizes.
//!
//! The model keeps the complete ordered buffer content in its state, so
//! per-class loss ratios, backlogs and waiting times fall out exactly.
//! A discrete-event simulator of the same filter algorithm is included for
//! cross-validation.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the stated tolerances
//! assume.

pub mod analysis;
pub mod des;
pub mod dynamics;
pub mod error;
pub mod markov;
pub mod scalar;
pub mod statespace;

pub use error::{ModelError, Result};
pub use scalar::Scalar;

pub use analysis::SolverOptions;
pub use dynamics::{ArrivalOutcome, FixedState, UnifiedCoord};
pub use statespace::{BufferString, StateSpace, SystemState};

pub type TrafficSpec = statespace::TrafficSpec<f64>;
pub type FilterConfig = statespace::FilterConfig<f64>;
pub type TransitionMatrix = markov::TransitionMatrix<f64>;
pub type RateMatrix = markov::RateMatrix<f64>;
pub type SparseMatrix = markov::SparseMatrix<f64>;
pub type PartitionedGenerator = markov::PartitionedGenerator<f64>;
pub type ArrivalDistribution = markov::ArrivalDistribution<f64>;
pub type StationaryResult = analysis::StationaryResult<f64>;
pub type TimeAverages = analysis::TimeAverages<f64>;
pub type OccupancyTable = analysis::OccupancyTable<f64>;
pub type ClassMetrics = analysis::ClassMetrics<f64>;
pub type AnalyticModel = analysis::AnalyticModel<f64>;

pub type TrafficSpecF32 = statespace::TrafficSpec<f32>;
pub type FilterConfigF32 = statespace::FilterConfig<f32>;
pub type AnalyticModelF32 = analysis::AnalyticModel<f32>;

//! Probabilistic operators of the model and the numerical kernels that act
//! on them.

pub mod chains;
pub mod operators;
pub mod sparse;
pub mod stationary;
pub mod uniformization;

pub use chains::{build_fixed_chain, build_md1_chain, ArrivalDistribution};
pub use operators::{build_h, build_q, replenish_map, EmbeddedOperator, PartitionedGenerator};
pub use sparse::{RateMatrix, SparseMatrix, TransitionMatrix};
pub use stationary::{point_mass, stationary, PowerIterationOptions, Stationary};
pub use uniformization::{expm_action, integrate_expm_action, Uniformized};

use crate::error::Result;
use crate::scalar::Scalar;

/// Stationary distribution of a finite transition matrix by power
/// iteration from `start`.
pub fn chain_stationary<S: Scalar>(
    chain: &TransitionMatrix<S>,
    start: usize,
    opts: PowerIterationOptions,
) -> Result<Stationary<S>> {
    stationary(|v| Ok(chain.apply(v)), point_mass(chain.dim(), start), opts)
}

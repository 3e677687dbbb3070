//! Power iteration for stationary distributions of stochastic operators.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::scalar::{l1_distance, Scalar};

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIterationOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_RESIDUAL_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary<S> {
    pub distribution: Vec<S>,
    /// Number of operator applications performed.
    pub iterations: usize,
    /// `‖step(π) - π‖₁` for the returned `π`.
    pub residual: S,
}

/// Iterates `v ← step(v)` from `initial` until `‖step(v) - v‖₁ ≤ tol`.
///
/// Iterates are renormalized to unit mass so that truncation loss inside
/// `step` does not accumulate. A periodic operator never settles and is
/// reported as [`ModelError::NotConverged`] with the last residual.
pub fn stationary<S, F>(
    mut step: F,
    initial: Vec<S>,
    opts: PowerIterationOptions,
) -> Result<Stationary<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<Vec<S>>,
{
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(ModelError::InvalidTolerance(opts.tol));
    }
    let tol = S::lit(opts.tol);
    let mut current = initial;
    let mut residual = S::infinity();
    for iteration in 1..=opts.max_iters {
        let mut next = step(&current)?;
        if next.len() != current.len() {
            return Err(ModelError::DimensionMismatch {
                expected: current.len(),
                got: next.len(),
            });
        }
        residual = l1_distance(&next, &current);
        if residual <= tol {
            return Ok(Stationary {
                distribution: current,
                iterations: iteration,
                residual,
            });
        }
        let mass: S = next.iter().copied().sum();
        if mass > S::zero() {
            next.iter_mut().for_each(|x| *x = *x / mass);
        }
        current = next;
    }
    Err(ModelError::NotConverged {
        iterations: opts.max_iters,
        residual: residual.to_f64_lossy(),
    })
}

/// Point mass at `index`.
pub fn point_mass<S: Scalar>(dim: usize, index: usize) -> Vec<S> {
    let mut v = vec![S::zero(); dim];
    v[index] = S::one();
    v
}

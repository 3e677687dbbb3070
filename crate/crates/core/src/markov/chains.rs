//! Fixed-packet-length chains on the collapsed coordinate `S ∈ {0..L+M}`.

use crate::dynamics::{md1_step, s_step};
use crate::error::{ModelError, Result};
use crate::markov::sparse::{SparseMatrix, TransitionMatrix};
use crate::scalar::Scalar;

/// Poisson arrival counts per period, `p(a) = e^{-λτ}(λτ)^a / a!` for
/// `a = 0..=max`, plus the remaining tail mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalDistribution<S> {
    mean: S,
    pmf: Vec<S>,
    tail: S,
}

impl<S: Scalar> ArrivalDistribution<S> {
    pub fn new(mean: S, max: usize) -> Self {
        let mut pmf = Vec::with_capacity(max + 1);
        let mut p = (-mean).exp();
        for a in 0..=max {
            if a > 0 {
                p = p * mean / S::from_count(a);
            }
            pmf.push(p);
        }
        let tail = (S::one() - pmf.iter().copied().sum::<S>()).max(S::zero());
        Self { mean, pmf, tail }
    }

    /// Truncated at the smallest `max` whose tail is below `tail_tol`.
    pub fn truncated(mean: S, tail_tol: S) -> Self {
        let mut max = 0;
        loop {
            let d = Self::new(mean, max);
            if d.tail < tail_tol || max > 10_000 {
                return d;
            }
            max += 1;
        }
    }

    pub fn mean(&self) -> S {
        self.mean
    }

    pub fn pmf(&self) -> &[S] {
        &self.pmf
    }

    pub fn tail(&self) -> S {
        self.tail
    }

    pub fn max(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `P(a ≥ from)`.
    pub fn tail_from(&self, from: usize) -> S {
        let head: S = self.pmf.iter().take(from).copied().sum();
        (S::one() - head).max(S::zero())
    }
}

fn build_chain<S: Scalar>(
    lambda_tau: S,
    buffer: u32,
    bucket: u32,
    step: fn(u32, u64, u32, u32) -> u32,
) -> Result<TransitionMatrix<S>> {
    if !(lambda_tau > S::zero() && lambda_tau.is_finite()) {
        return Err(ModelError::InvalidTraffic(format!(
            "λτ must be positive, got {lambda_tau}"
        )));
    }
    let cap = (buffer + bucket) as usize;
    let arrivals = ArrivalDistribution::new(lambda_tau, cap);
    let mut triplets = Vec::new();
    for s in 0..=cap {
        // every a ≥ cap - s hits the min{L+M, ·} cap: fold it into one entry
        let saturate = cap - s;
        for a in 0..saturate {
            triplets.push((
                s,
                step(s as u32, a as u64, buffer, bucket) as usize,
                arrivals.pmf()[a],
            ));
        }
        triplets.push((
            s,
            step(s as u32, saturate as u64, buffer, bucket) as usize,
            arrivals.tail_from(saturate),
        ));
    }
    TransitionMatrix::new(
        SparseMatrix::from_triplets(cap + 1, cap + 1, triplets),
        S::lit(1e-12),
    )
}

/// Periodic Transfer chain: `S⁺ = max{0, min{L+M, S + a} - 1}`.
pub fn build_fixed_chain<S: Scalar>(
    lambda_tau: S,
    buffer: u32,
    bucket: u32,
) -> Result<TransitionMatrix<S>> {
    build_chain(lambda_tau, buffer, bucket, s_step)
}

/// M/D/1/L+M token-level chain, the server-style contrast model.
pub fn build_md1_chain<S: Scalar>(
    lambda_tau: S,
    buffer: u32,
    bucket: u32,
) -> Result<TransitionMatrix<S>> {
    build_chain(lambda_tau, buffer, bucket, md1_step)
}

//! Matrix-exponential actions by uniformization.
//!
//! With `Λ = max_i |A_ii|` and `P = I + A/Λ` (sub-stochastic),
//!
//! ```text
//! v·exp(At)                 = Σ_k  pois(k; Λt)            · v·P^k
//! (1/τ)∫₀^τ v·exp(Aη) dη    = Σ_k  P(Pois(Λτ) > k)/(Λτ)   · v·P^k
//! ```
//!
//! Both series have non-negative weights summing to one, so truncating
//! once the remaining weight drops below `tol` bounds the error in total
//! variation by `tol`.

use crate::error::{ModelError, Result};
use crate::markov::sparse::{RateMatrix, SparseMatrix};
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-12;

/// Uniformized form of a generator, reusable across many vector actions.
#[derive(Debug, Clone)]
pub struct Uniformized<S> {
    rate: S,
    /// `I + A/Λ`; `None` when `A` is identically zero.
    jump: Option<SparseMatrix<S>>,
    dim: usize,
}

impl<S: Scalar> Uniformized<S> {
    pub fn new(a: &RateMatrix<S>) -> Self {
        let rate = a.max_exit_rate();
        let jump = (rate > S::zero()).then(|| a.matrix().identity_plus_scaled(rate));
        Self {
            rate,
            jump,
            dim: a.dim(),
        }
    }

    pub fn rate(&self) -> S {
        self.rate
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, v: &[S], t: S, tol: S) -> Result<()> {
        if v.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if tol.is_nan() || tol <= S::zero() {
            return Err(ModelError::InvalidTolerance(tol.to_f64_lossy()));
        }
        if !(t >= S::zero() && t.is_finite()) {
            return Err(ModelError::InvalidTolerance(t.to_f64_lossy()));
        }
        Ok(())
    }

    /// Sums `Σ_k weight(k) · v·P^k` for a weight sequence produced lazily.
    fn series(&self, v: &[S], weights: &[S]) -> Vec<S> {
        let jump = self.jump.as_ref().expect("non-zero generator");
        let mut term = v.to_vec();
        let mut next = vec![S::zero(); self.dim];
        let mut acc = vec![S::zero(); self.dim];
        for (k, &w) in weights.iter().enumerate() {
            if k > 0 {
                jump.left_mul_into(&term, &mut next);
                std::mem::swap(&mut term, &mut next);
            }
            for (a, &x) in acc.iter_mut().zip(&term) {
                *a = *a + w * x;
            }
        }
        acc
    }

    /// `v · exp(A t)` within total-variation error `tol`.
    pub fn expm_action(&self, v: &[S], t: S, tol: S) -> Result<Vec<S>> {
        self.check(v, t, tol)?;
        if self.jump.is_none() || t.is_zero() {
            return Ok(v.to_vec());
        }
        let weights = poisson_pmf_truncated(self.rate * t, tol);
        Ok(self.series(v, &weights))
    }

    /// `(1/τ) ∫₀^τ v · exp(A η) dη` within total-variation error `tol`.
    pub fn integrate_expm_action(&self, v: &[S], tau: S, tol: S) -> Result<Vec<S>> {
        self.check(v, tau, tol)?;
        if self.jump.is_none() || tau.is_zero() {
            return Ok(v.to_vec());
        }
        let weights = poisson_survival_weights(self.rate * tau, tol);
        Ok(self.series(v, &weights))
    }
}

pub fn expm_action<S: Scalar>(a: &RateMatrix<S>, v: &[S], t: S, tol: S) -> Result<Vec<S>> {
    Uniformized::new(a).expm_action(v, t, tol)
}

pub fn integrate_expm_action<S: Scalar>(
    a: &RateMatrix<S>,
    v: &[S],
    tau: S,
    tol: S,
) -> Result<Vec<S>> {
    Uniformized::new(a).integrate_expm_action(v, tau, tol)
}

/// Hard cap on the series length: far beyond any tail of interest, and a
/// guard for scalar types too coarse to ever reach `tol`.
fn term_cap<S: Scalar>(mean: S) -> usize {
    let m = mean.to_f64_lossy();
    (m + 40.0 * m.sqrt() + 200.0).ceil() as usize
}

/// `pois(k; mean)` for `k = 0..K`, with `K` the first index past the mean
/// at which the remaining tail mass is below `tol`.
pub(crate) fn poisson_pmf_truncated<S: Scalar>(mean: S, tol: S) -> Vec<S> {
    let ln_mean = mean.ln();
    let cap = term_cap(mean);
    let mut out = Vec::new();
    let mut log_p = -mean;
    let mut cumulative = S::zero();
    for k in 0..=cap {
        if k > 0 {
            log_p = log_p + ln_mean - S::from_count(k).ln();
        }
        let p = log_p.exp();
        cumulative = cumulative + p;
        out.push(p);
        if S::from_count(k) >= mean && S::one() - cumulative < tol {
            break;
        }
    }
    out
}

/// `P(Pois(mean) > k) / mean` for `k = 0..K`; these weights sum to one.
pub(crate) fn poisson_survival_weights<S: Scalar>(mean: S, tol: S) -> Vec<S> {
    let ln_mean = mean.ln();
    let cap = term_cap(mean);
    let mut out = Vec::new();
    let mut log_p = -mean;
    // P(N > 0) via expm1 keeps small means accurate
    let mut survival = -(-mean).exp_m1();
    let mut total = S::zero();
    for k in 0..=cap {
        if k > 0 {
            log_p = log_p + ln_mean - S::from_count(k).ln();
            survival = survival - log_p.exp();
        }
        let w = survival.max(S::zero()) / mean;
        total = total + w;
        out.push(w);
        if S::from_count(k) >= mean && S::one() - total < tol {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_cases() {
        let a = RateMatrix::from_dense(&[vec![-1.0, 1.0], vec![0.5, -0.5]]).unwrap();
        let v = vec![0.3, 0.7];
        assert_eq!(expm_action(&a, &v, 0.0, 1e-12).unwrap(), v);
        let zero = RateMatrix::from_dense(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(expm_action(&zero, &v, 3.0, 1e-12).unwrap(), v);
        assert_eq!(integrate_expm_action(&zero, &v, 3.0, 1e-12).unwrap(), v);
    }

    #[test]
    fn two_state_closed_form() {
        let a = RateMatrix::from_dense(&[vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let out = expm_action(&a, &[1.0, 0.0], 1.0, 1e-12).unwrap();
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(out[0], e, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 1.0 - e, epsilon = 1e-12);
    }

    #[test]
    fn scalar_integral_closed_form() {
        for (lambda, tau) in [(0.5f64, 1.0f64), (5.0, 1.0), (2.0, 0.3), (40.0, 1.0)] {
            let a = RateMatrix::from_dense(&[vec![-lambda]]).unwrap();
            let out = integrate_expm_action(&a, &[1.0], tau, 1e-12).unwrap();
            let exact = (1.0 - (-lambda * tau).exp()) / (lambda * tau);
            assert_abs_diff_eq!(out[0], exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for mean in [1e-3, 0.5, 5.0, 80.0, 900.0] {
            let p: f64 = poisson_pmf_truncated(mean, 1e-12).iter().sum();
            let w: f64 = poisson_survival_weights(mean, 1e-12).iter().sum();
            assert!((1.0 - p).abs() < 1e-11, "pmf mean {mean}: {p}");
            assert!((1.0 - w).abs() < 1e-11, "weights mean {mean}: {w}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = RateMatrix::from_dense(&[vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(expm_action(&a, &[1.0], 1.0, 1e-12).is_err());
        assert!(expm_action(&a, &[1.0, 0.0], 1.0, 0.0).is_err());
        assert!(expm_action(&a, &[1.0, 0.0], -1.0, 1e-12).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let a = RateMatrix::from_dense(&[vec![-1.0f32, 1.0], vec![0.0, 0.0]]).unwrap();
        let out = expm_action(&a, &[1.0, 0.0], 1.0, 1e-6).unwrap();
        assert!((out[0] - (-1.0f32).exp()).abs() < 1e-5);
    }
}

//! Replenishment matrix `H`, rate matrix `Q`, the per-token-level
//! partitioned generators `Γ^T`, and the embedded operator
//! `G = exp(Qτ) H`.

use crate::dynamics::{var_arrive, var_replenish};
use crate::error::Result;
use crate::markov::sparse::{RateMatrix, SparseMatrix, TransitionMatrix};
use crate::markov::uniformization::Uniformized;
use crate::scalar::Scalar;
use crate::statespace::{StateSpace, TrafficSpec};

/// Target index of every state under one token replenishment.
pub fn replenish_map(space: &StateSpace) -> Vec<usize> {
    (0..space.len())
        .map(|i| {
            let next = var_replenish(space.state(i), space.bucket());
            space
                .index_of(&next)
                .expect("replenishment stays inside the state space")
        })
        .collect()
}

/// `H[i][j] = 1` iff replenishing `X_i` yields `X_j`.
pub fn build_h<S: Scalar>(space: &StateSpace) -> TransitionMatrix<S> {
    let n = space.len();
    let triplets = replenish_map(space)
        .into_iter()
        .enumerate()
        .map(|(i, j)| (i, j, S::one()))
        .collect();
    TransitionMatrix::new(SparseMatrix::from_triplets(n, n, triplets), S::zero())
        .expect("one unit entry per row")
}

/// Arrival generator between replenishments. Each accepted arrival of
/// class `k` contributes rate `u_k λ` towards the post-arrival state;
/// blocked arrivals leave the state unchanged and contribute nothing.
pub fn build_q<S: Scalar>(space: &StateSpace, traffic: &TrafficSpec<S>) -> RateMatrix<S> {
    let n = space.len();
    let mut triplets = Vec::new();
    for i in 0..n {
        let state = space.state(i);
        let mut out = S::zero();
        for k in 0..traffic.classes() {
            let rate = traffic.class_rate(k);
            let (next, accepted) = var_arrive(state.clone(), traffic.size(k), space.buffer());
            if accepted && !rate.is_zero() {
                let j = space
                    .index_of(&next)
                    .expect("arrival stays inside the state space");
                triplets.push((i, j, rate));
                out = out + rate;
            }
        }
        triplets.push((i, i, -out));
    }
    RateMatrix::new(SparseMatrix::from_triplets(n, n, triplets))
        .expect("conservative by construction")
}

/// Block generators exploiting that, between replenishments, a non-empty
/// buffer pins the token level.
///
/// `Γ^T` acts on `[P^ε, P^T, escape]`:
///
/// ```text
///        ε-block     level-T block   escape
///      [ Q^ε          B^T             e^T ]
///      [ 0            Q'              0   ]
///      [ 0            0               0   ]
/// ```
///
/// `Q^ε` has diagonal `-λ` and loses, from each `(T', ε)` with `T' ≠ T`,
/// the rate at which arrivals queue at level `T'`. That outflow is
/// collected in the absorbing `escape` coordinate so that `Γ^T` is a
/// conservative generator; it never feeds back and is ignored by every
/// statistic.
#[derive(Debug, Clone)]
pub struct PartitionedGenerator<S> {
    levels: usize,
    nonempty: usize,
    q_empty: SparseMatrix<S>,
    q_nonempty: SparseMatrix<S>,
    couplings: Vec<SparseMatrix<S>>,
    escapes: Vec<Vec<S>>,
    gammas: Vec<RateMatrix<S>>,
}

impl<S: Scalar> PartitionedGenerator<S> {
    pub fn build(space: &StateSpace, traffic: &TrafficSpec<S>) -> Self {
        let levels = space.levels();
        let r = space.nonempty_count();
        let lambda = traffic.rate();

        let mut eps = Vec::new();
        for t in 0..levels {
            eps.push((t, t, -lambda));
            for k in 0..traffic.classes() {
                let l = traffic.size(k) as usize;
                if t >= l {
                    eps.push((t, t - l, traffic.class_rate(k)));
                }
            }
        }
        let q_empty = SparseMatrix::from_triplets(levels, levels, eps);

        let mut qp = Vec::new();
        for j in 1..space.string_count() {
            let mut out = S::zero();
            for k in 0..traffic.classes() {
                if let Some(next) = space.append_index(j, k) {
                    qp.push((j - 1, next - 1, traffic.class_rate(k)));
                    out = out + traffic.class_rate(k);
                }
            }
            qp.push((j - 1, j - 1, -out));
        }
        let q_nonempty = SparseMatrix::from_triplets(r, r, qp);

        // queueing rate out of (T', ε) for every T'
        let queueing: Vec<Vec<(usize, S)>> = (0..levels)
            .map(|t| {
                (0..traffic.classes())
                    .filter(|&k| (t as u32) < traffic.size(k))
                    .map(|k| (space.singleton_index(k) - 1, traffic.class_rate(k)))
                    .collect()
            })
            .collect();

        let mut couplings = Vec::with_capacity(levels);
        let mut escapes = Vec::with_capacity(levels);
        let mut gammas = Vec::with_capacity(levels);
        for t in 0..levels {
            let b: Vec<_> = queueing[t].iter().map(|&(p, v)| (t, p, v)).collect();
            let b = SparseMatrix::from_triplets(levels, r, b);
            let escape: Vec<S> = (0..levels)
                .map(|t2| {
                    if t2 == t {
                        S::zero()
                    } else {
                        queueing[t2].iter().map(|&(_, v)| v).sum()
                    }
                })
                .collect();
            let dim = levels + r + 1;
            let mut g: Vec<_> = q_empty.triplets().collect();
            g.extend(b.triplets().map(|(i, p, v)| (i, levels + p, v)));
            g.extend(escape.iter().enumerate().map(|(i, &v)| (i, levels + r, v)));
            g.extend(
                q_nonempty
                    .triplets()
                    .map(|(i, j, v)| (levels + i, levels + j, v)),
            );
            let gamma = RateMatrix::new(SparseMatrix::from_triplets(dim, dim, g))
                .expect("partitioned generator is a generator");
            couplings.push(b);
            escapes.push(escape);
            gammas.push(gamma);
        }

        Self {
            levels,
            nonempty: r,
            q_empty,
            q_nonempty,
            couplings,
            escapes,
            gammas,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn nonempty(&self) -> usize {
        self.nonempty
    }

    /// `Q^ε`, `(M+1) x (M+1)`.
    pub fn q_empty(&self) -> &SparseMatrix<S> {
        &self.q_empty
    }

    /// `Q'`, `R x R`.
    pub fn q_nonempty(&self) -> &SparseMatrix<S> {
        &self.q_nonempty
    }

    /// `B^T`, `(M+1) x R`.
    pub fn coupling(&self, tokens: u32) -> &SparseMatrix<S> {
        &self.couplings[tokens as usize]
    }

    /// Rate from each `(T', ε)` into non-empty states of other levels.
    pub fn escape(&self, tokens: u32) -> &[S] {
        &self.escapes[tokens as usize]
    }

    /// `Γ^T` with its escape coordinate, dimension `M + 1 + R + 1`.
    pub fn gamma(&self, tokens: u32) -> &RateMatrix<S> {
        &self.gammas[tokens as usize]
    }

    pub fn gamma_dim(&self) -> usize {
        self.levels + self.nonempty + 1
    }

    pub fn escape_coord(&self) -> usize {
        self.levels + self.nonempty
    }

    /// Global state index of every non-escape coordinate of `Γ^T`.
    pub fn support(&self, space: &StateSpace, tokens: u32) -> Vec<usize> {
        space
            .empty_block()
            .chain(space.level_block(tokens))
            .collect()
    }

    /// `[P^ε, P^T, 0]` from a full-space vector.
    pub fn restrict(&self, space: &StateSpace, full: &[S], tokens: u32) -> Vec<S> {
        let mut v: Vec<S> = self
            .support(space, tokens)
            .iter()
            .map(|&i| full[i])
            .collect();
        v.push(S::zero());
        v
    }
}

/// The embedded post-replenishment operator `v ↦ v · exp(Qτ) · H`,
/// applied without forming `exp(Qτ)`.
#[derive(Debug, Clone)]
pub struct EmbeddedOperator<S> {
    arrivals: Uniformized<S>,
    replenish: Vec<usize>,
    period: S,
    tol: S,
}

impl<S: Scalar> EmbeddedOperator<S> {
    pub fn new(space: &StateSpace, q: &RateMatrix<S>, period: S, tol: S) -> Self {
        Self {
            arrivals: Uniformized::new(q),
            replenish: replenish_map(space),
            period,
            tol,
        }
    }

    pub fn dim(&self) -> usize {
        self.replenish.len()
    }

    pub fn apply(&self, v: &[S]) -> Result<Vec<S>> {
        let before = self.arrivals.expm_action(v, self.period, self.tol)?;
        let mut after = vec![S::zero(); before.len()];
        for (i, &p) in before.iter().enumerate() {
            after[self.replenish[i]] = after[self.replenish[i]] + p;
        }
        Ok(after)
    }

    /// `‖v G - v‖₁`.
    pub fn residual(&self, v: &[S]) -> Result<S> {
        Ok(crate::scalar::l1_distance(&self.apply(v)?, v))
    }
}

//! Continuous-time statistics from the embedded post-replenishment chain.
//!
//! The stationary distribution `π` of `G = exp(Qτ) H` describes the system
//! immediately after each token replenishment. Time averages over a period
//! are recovered by integrating the transient evolution from `π` across one
//! period. Between replenishments a non-empty buffer pins the token level,
//! so the integral splits into one small problem per level, each driven by
//! the partitioned generator `Γ^T` and started from `[π^ε, π_T]`.
//!
//! Arrivals are Poisson, so time averages are also the probabilities seen
//! by an arriving packet; that is what turns the blocking-set average into
//! a per-class loss ratio.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::markov::{
    build_q, point_mass, stationary, EmbeddedOperator, PartitionedGenerator, PowerIterationOptions,
    RateMatrix, Uniformized,
};
use crate::scalar::Scalar;
use crate::statespace::{BufferString, FilterConfig, StateSpace, TrafficSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when `‖πG - π‖₁` is at most this.
    pub residual_tol: f64,
    /// Truncation tolerance for every uniformization series.
    pub expm_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            residual_tol: crate::markov::stationary::DEFAULT_RESIDUAL_TOL,
            expm_tol: crate::markov::uniformization::DEFAULT_TOL,
            max_iters: crate::markov::stationary::DEFAULT_MAX_ITERS,
        }
    }
}

/// Stationary distribution of the embedded chain with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult<S> {
    pi: Vec<S>,
    iterations: usize,
    residual: S,
    levels: usize,
    nonempty: usize,
}

impl<S: Scalar> StationaryResult<S> {
    pub fn pi(&self) -> &[S] {
        &self.pi
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual(&self) -> S {
        self.residual
    }

    /// `[π⁰_0 .. π⁰_M]`, the empty-buffer probabilities.
    pub fn empty_slice(&self) -> &[S] {
        &self.pi[..self.levels]
    }

    /// `π_T` restricted to non-empty buffers.
    pub fn level(&self, tokens: u32) -> &[S] {
        let start = self.levels + tokens as usize * self.nonempty;
        &self.pi[start..start + self.nonempty]
    }

    pub fn mass(&self) -> S {
        self.pi.iter().copied().sum()
    }
}

/// Power iteration on `v ↦ v exp(Qτ) H` from `(M, ε)`.
pub fn solve_stationary<S: Scalar>(
    space: &StateSpace,
    traffic: &TrafficSpec<S>,
    config: &FilterConfig<S>,
    opts: &SolverOptions,
) -> Result<StationaryResult<S>> {
    let q = build_q(space, traffic);
    solve_with_generator(space, &q, config, opts)
}

fn solve_with_generator<S: Scalar>(
    space: &StateSpace,
    q: &RateMatrix<S>,
    config: &FilterConfig<S>,
    opts: &SolverOptions,
) -> Result<StationaryResult<S>> {
    let op = EmbeddedOperator::new(space, q, config.period(), S::lit(opts.expm_tol));
    let out = stationary(
        |v| op.apply(v),
        point_mass(space.len(), space.full_bucket_index()),
        PowerIterationOptions {
            tol: opts.residual_tol,
            max_iters: opts.max_iters,
        },
    )?;
    Ok(StationaryResult {
        pi: out.distribution,
        iterations: out.iterations,
        residual: out.residual,
        levels: space.levels(),
        nonempty: space.nonempty_count(),
    })
}

/// Backlog distribution of the fixed-length filter from the collapsed
/// chain: `π^Q(0) = Σ_{k ≤ M} π^S(k)`, `π^Q(j) = π^S(j + M)` for `j ≥ 1`.
pub fn map_s_to_q<S: Scalar>(pi_s: &[S], buffer: u32, bucket: u32) -> Vec<S> {
    let m = bucket as usize;
    assert_eq!(pi_s.len(), (buffer + bucket) as usize + 1);
    let mut out = Vec::with_capacity(buffer as usize + 1);
    out.push(pi_s[..=m].iter().copied().sum());
    out.extend((1..=buffer as usize).map(|j| pi_s[j + m]));
    out
}

/// Subset `A` of the state space, as a membership mask over global indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorSet {
    members: Vec<bool>,
    levels: usize,
}

impl IndicatorSet {
    pub fn from_fn(space: &StateSpace, mut f: impl FnMut(u32, &BufferString) -> bool) -> Self {
        let members = (0..space.len())
            .map(|i| {
                let (t, j) = space.decompose(i);
                f(t, space.string(j))
            })
            .collect();
        Self {
            members,
            levels: space.levels(),
        }
    }

    pub fn all(space: &StateSpace) -> Self {
        Self::from_fn(space, |_, _| true)
    }

    pub fn none(space: &StateSpace) -> Self {
        Self::from_fn(space, |_, _| false)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members[i]
    }

    /// `A^ε`: members with an empty buffer, indexed by token level.
    pub fn empty_part(&self) -> &[bool] {
        &self.members[..self.levels]
    }

    /// `A^ε̄`: members with a non-empty buffer, by global index.
    pub fn nonempty_part(&self) -> impl Iterator<Item = usize> + '_ {
        (self.levels..self.members.len()).filter(|&i| self.members[i])
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            members: self
                .members
                .iter()
                .zip(&other.members)
                .map(|(a, b)| *a || *b)
                .collect(),
            levels: self.levels,
        }
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        !self
            .members
            .iter()
            .zip(&other.members)
            .any(|(a, b)| *a && *b)
    }
}

/// Period-averaged distributions, one per token level, from which every
/// time average is a dot product.
#[derive(Debug, Clone)]
pub struct TimeAverages<S> {
    levels: usize,
    nonempty: usize,
    /// Averaged `[P^ε, P^T, escape]` for each `T`.
    per_level: Vec<Vec<S>>,
    tol: S,
}

impl<S: Scalar> TimeAverages<S> {
    pub fn compute(
        space: &StateSpace,
        result: &StationaryResult<S>,
        generators: &PartitionedGenerator<S>,
        period: S,
        tol: S,
    ) -> Result<Self> {
        let per_level = (0..space.levels() as u32)
            .map(|t| {
                let start = generators.restrict(space, result.pi(), t);
                Uniformized::new(generators.gamma(t)).integrate_expm_action(&start, period, tol)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            levels: space.levels(),
            nonempty: space.nonempty_count(),
            per_level,
            tol,
        })
    }

    /// Averaged empty-buffer probabilities taken from the `Γ^k` problem.
    pub fn empty_via(&self, k: u32) -> &[S] {
        &self.per_level[k as usize][..self.levels]
    }

    pub fn empty(&self) -> &[S] {
        self.empty_via(0)
    }

    /// Averaged non-empty probabilities at level `T`, in string order.
    pub fn level(&self, tokens: u32) -> &[S] {
        &self.per_level[tokens as usize][self.levels..self.levels + self.nonempty]
    }

    pub fn tolerance(&self) -> S {
        self.tol
    }

    /// `E_A`, with the empty-buffer term evaluated through `Γ^k`.
    pub fn probability_via(&self, set: &IndicatorSet, k: u32) -> S {
        let empty: S = self
            .empty_via(k)
            .iter()
            .zip(set.empty_part())
            .filter(|(_, &m)| m)
            .map(|(&p, _)| p)
            .sum();
        let nonempty: S = set
            .nonempty_part()
            .map(|i| {
                let off = i - self.levels;
                let t = off / self.nonempty;
                self.per_level[t][self.levels + off % self.nonempty]
            })
            .sum();
        empty + nonempty
    }

    pub fn probability(&self, set: &IndicatorSet) -> S {
        self.probability_via(set, 0)
    }

    /// Sum over non-empty states of `weight(string index) · P̄(T, z_j)`.
    fn weighted_nonempty(&self, mut weight: impl FnMut(usize) -> S) -> S {
        let weights: Vec<S> = (1..=self.nonempty).map(&mut weight).collect();
        (0..self.levels as u32)
            .map(|t| {
                self.level(t)
                    .iter()
                    .zip(&weights)
                    .map(|(&p, &w)| p * w)
                    .sum::<S>()
            })
            .sum()
    }
}

/// `E_A` for an arbitrary indicator set.
pub fn time_average<S: Scalar>(
    space: &StateSpace,
    result: &StationaryResult<S>,
    generators: &PartitionedGenerator<S>,
    set: &IndicatorSet,
    period: S,
    tol: S,
) -> Result<S> {
    Ok(TimeAverages::compute(space, result, generators, period, tol)?.probability(set))
}

/// `E_A` computed from the full generator, `(1/τ)∫ π exp(Qη) 1_A dη`.
/// Costs one integral over the whole space; used for cross-checks.
pub fn time_average_full<S: Scalar>(
    result: &StationaryResult<S>,
    q: &RateMatrix<S>,
    set: &IndicatorSet,
    period: S,
    tol: S,
) -> Result<S> {
    let avg = Uniformized::new(q).integrate_expm_action(result.pi(), period, tol)?;
    Ok(avg
        .iter()
        .enumerate()
        .filter(|&(i, _)| set.contains(i))
        .map(|(_, &p)| p)
        .sum())
}

/// Time-average joint distribution of tokens and backlog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTable<S> {
    /// `cells[T][b]` for `T ∈ 0..=M`, `b ∈ 0..=L`.
    cells: Vec<Vec<S>>,
}

impl<S: Scalar> OccupancyTable<S> {
    pub fn zeros(bucket: u32, buffer: u32) -> Self {
        Self {
            cells: vec![vec![S::zero(); buffer as usize + 1]; bucket as usize + 1],
        }
    }

    pub fn from_cells(cells: Vec<Vec<S>>) -> Self {
        Self { cells }
    }

    pub fn get(&self, tokens: u32, backlog: u32) -> S {
        self.cells[tokens as usize][backlog as usize]
    }

    pub fn cells(&self) -> &[Vec<S>] {
        &self.cells
    }

    pub fn bucket(&self) -> u32 {
        self.cells.len() as u32 - 1
    }

    pub fn buffer(&self) -> u32 {
        self.cells[0].len() as u32 - 1
    }

    pub fn total(&self) -> S {
        self.cells.iter().flatten().copied().sum()
    }

    /// Backlog marginal.
    pub fn backlog_marginal(&self) -> Vec<S> {
        (0..self.cells[0].len())
            .map(|b| self.cells.iter().map(|row| row[b]).sum())
            .collect()
    }

    pub fn mean_backlog(&self) -> S {
        self.backlog_marginal()
            .iter()
            .enumerate()
            .map(|(b, &p)| S::from_count(b) * p)
            .sum()
    }

    pub fn total_variation(&self, other: &Self) -> S {
        let a: Vec<S> = self.cells.iter().flatten().copied().collect();
        let b: Vec<S> = other.cells.iter().flatten().copied().collect();
        crate::scalar::total_variation(&a, &b)
    }
}

pub fn occupancy_from_averages<S: Scalar>(
    space: &StateSpace,
    avg: &TimeAverages<S>,
) -> OccupancyTable<S> {
    let mut table = OccupancyTable::zeros(space.bucket(), space.buffer());
    for t in 0..=space.bucket() {
        table.cells[t as usize][0] = avg.empty()[t as usize];
        for (p, &v) in avg.level(t).iter().enumerate() {
            let b = space.backlog_of(p + 1) as usize;
            table.cells[t as usize][b] = table.cells[t as usize][b] + v;
        }
    }
    table
}

pub fn occupancy_table<S: Scalar>(
    space: &StateSpace,
    result: &StationaryResult<S>,
    generators: &PartitionedGenerator<S>,
    period: S,
    tol: S,
) -> Result<OccupancyTable<S>> {
    let avg = TimeAverages::compute(space, result, generators, period, tol)?;
    Ok(occupancy_from_averages(space, &avg))
}

/// States in which an arriving packet of `size` tokens is dropped:
/// non-empty buffer with `|z| > L - size`.
pub fn blocking_set(space: &StateSpace, size: u32) -> IndicatorSet {
    let limit = space.buffer().saturating_sub(size);
    IndicatorSet::from_fn(space, |_, z| !z.is_empty() && z.backlog() > limit)
}

pub fn loss_ratio_from_averages<S: Scalar>(
    space: &StateSpace,
    avg: &TimeAverages<S>,
    size: u32,
) -> S {
    avg.probability(&blocking_set(space, size))
}

/// Loss ratio `L(l)` of packets of the given size.
pub fn loss_ratio<S: Scalar>(
    space: &StateSpace,
    result: &StationaryResult<S>,
    generators: &PartitionedGenerator<S>,
    size: u32,
    period: S,
    tol: S,
) -> Result<S> {
    let avg = TimeAverages::compute(space, result, generators, period, tol)?;
    Ok(loss_ratio_from_averages(space, &avg, size))
}

pub fn class_backlog_from_averages<S: Scalar>(
    space: &StateSpace,
    avg: &TimeAverages<S>,
    class: usize,
) -> S {
    avg.weighted_nonempty(|j| S::from_count(space.class_count(class, j)))
}

/// Mean number of class-`k` packets in the buffer, `E_Q(k)`.
pub fn class_backlog<S: Scalar>(
    space: &StateSpace,
    result: &StationaryResult<S>,
    generators: &PartitionedGenerator<S>,
    class: usize,
    period: S,
    tol: S,
) -> Result<S> {
    let avg = TimeAverages::compute(space, result, generators, period, tol)?;
    Ok(class_backlog_from_averages(space, &avg, class))
}

/// Little's law: `E_W(k) = E_Q(k) / ((1 - L(l_k)) λ u_k)`.
pub fn waiting_time<S: Scalar>(
    mean_backlog: S,
    loss: S,
    rate: S,
    prob: S,
    class: usize,
) -> Result<S> {
    let effective = (S::one() - loss) * rate * prob;
    if effective.is_nan() || effective <= S::zero() {
        return Err(ModelError::ZeroEffectiveRate { class });
    }
    Ok(mean_backlog / effective)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<S> {
    pub class: usize,
    pub size: u32,
    pub prob: S,
    pub loss_ratio: S,
    /// `E_Q(k)`, packets.
    pub mean_backlog: S,
    /// `E_W(k)`, time units; `None` when no packet of the class gets through.
    pub mean_wait: Option<S>,
    /// `(1 - L(l_k)) λ u_k`.
    pub throughput: S,
}

pub fn class_metrics_from_averages<S: Scalar>(
    space: &StateSpace,
    traffic: &TrafficSpec<S>,
    avg: &TimeAverages<S>,
) -> Vec<ClassMetrics<S>> {
    (0..traffic.classes())
        .map(|k| {
            let loss = loss_ratio_from_averages(space, avg, traffic.size(k));
            let mean_backlog = class_backlog_from_averages(space, avg, k);
            let mean_wait =
                waiting_time(mean_backlog, loss, traffic.rate(), traffic.prob(k), k).ok();
            ClassMetrics {
                class: k,
                size: traffic.size(k),
                prob: traffic.prob(k),
                loss_ratio: loss,
                mean_backlog,
                mean_wait,
                throughput: (S::one() - loss) * traffic.class_rate(k),
            }
        })
        .collect()
}

/// Everything the analytic pipeline produces for one scenario.
#[derive(Debug, Clone)]
pub struct AnalyticModel<S> {
    pub traffic: TrafficSpec<S>,
    pub config: FilterConfig<S>,
    pub space: StateSpace,
    pub q: RateMatrix<S>,
    pub generators: PartitionedGenerator<S>,
    pub stationary: StationaryResult<S>,
    pub averages: TimeAverages<S>,
}

impl<S: Scalar> AnalyticModel<S> {
    pub fn solve(
        traffic: &TrafficSpec<S>,
        config: &FilterConfig<S>,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let space = StateSpace::build(traffic, config)?;
        let q = build_q(&space, traffic);
        let generators = PartitionedGenerator::build(&space, traffic);
        let stationary = solve_with_generator(&space, &q, config, opts)?;
        let averages = TimeAverages::compute(
            &space,
            &stationary,
            &generators,
            config.period(),
            S::lit(opts.expm_tol),
        )?;
        Ok(Self {
            traffic: traffic.clone(),
            config: config.clone(),
            space,
            q,
            generators,
            stationary,
            averages,
        })
    }

    pub fn occupancy(&self) -> OccupancyTable<S> {
        occupancy_from_averages(&self.space, &self.averages)
    }

    pub fn class_metrics(&self) -> Vec<ClassMetrics<S>> {
        class_metrics_from_averages(&self.space, &self.traffic, &self.averages)
    }

    pub fn time_average(&self, set: &IndicatorSet) -> S {
        self.averages.probability(set)
    }

    /// Solver residual plus integration tolerance.
    pub fn error_bound(&self) -> S {
        self.stationary.residual() + self.averages.tolerance()
    }
}

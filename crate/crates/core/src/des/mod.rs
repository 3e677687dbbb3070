//! Event-driven simulation of the token bucket filter.
//!
//! Tokens arrive at exact multiples of `τ`; packets arrive as a Poisson
//! process with i.i.d. sizes. Every state change goes through the pure
//! functions in [`crate::dynamics`]. A token and a packet arriving at the
//! same instant are processed token first.
//!
//! Arrival instants and packet sizes are drawn from separate ChaCha
//! streams of the same seed, so changing the class mix does not move the
//! arrival instants.

mod invariants;
mod stats;

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    fixed_arrive, fixed_replenish, var_arrive_outcome, var_replenish, ArrivalOutcome, FixedState,
};
use crate::error::{ModelError, Result};
use crate::statespace::{FilterConfig, SystemState, TrafficSpec};

pub use invariants::InvariantChecker;
pub use stats::{
    batch_confidence, BatchReport, ClassCounters, ClassIntervals, Granule, Interval, Lifetime,
    SimStats,
};

const TIME_STREAM: u64 = 0;
const SIZE_STREAM: u64 = 1;

/// Deliberate dynamics faults, used to exercise the invariant checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// An arriving packet is queued even though stored tokens would have
    /// let it pass; the tokens are left untouched.
    SkipTokenDecrement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Number of replenishment periods simulated.
    pub horizon: u64,
    /// Leading periods excluded from statistics.
    pub warmup: u64,
    pub seed: u64,
    /// Number of partial-sum slices kept for batch means.
    pub granules: usize,
    pub check_invariants: bool,
    pub fault: Option<Fault>,
}

impl SimParams {
    /// Warmup of 10% of the horizon, 1000 granules, invariant checks on.
    pub fn new(horizon: u64, seed: u64) -> Self {
        Self {
            horizon,
            warmup: horizon / 10,
            seed,
            granules: 1000,
            check_invariants: true,
            fault: None,
        }
    }

    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = warmup;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.horizon <= self.warmup {
            return Err(ModelError::InvalidSimulation(format!(
                "horizon ({}) must exceed warmup ({})",
                self.horizon, self.warmup
            )));
        }
        if self.granules == 0 {
            return Err(ModelError::InvalidSimulation(
                "granules must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut times = ChaCha8Rng::seed_from_u64(seed);
    times.set_stream(TIME_STREAM);
    let mut sizes = ChaCha8Rng::seed_from_u64(seed);
    sizes.set_stream(SIZE_STREAM);
    (times, sizes)
}

/// Poisson arrival instants; `None` for an idle input.
struct ArrivalClock {
    gap: Option<Exp<f64>>,
    rng: ChaCha8Rng,
    next: f64,
}

impl ArrivalClock {
    fn new(rate: f64, mut rng: ChaCha8Rng) -> Self {
        let gap = (rate > 0.0).then(|| Exp::new(rate).expect("positive rate"));
        let next = gap.as_ref().map_or(f64::INFINITY, |g| g.sample(&mut rng));
        Self { gap, rng, next }
    }

    fn advance(&mut self) {
        if let Some(g) = &self.gap {
            self.next += g.sample(&mut self.rng);
        }
    }
}

/// Accumulates time-weighted quantities while the observation window is open.
struct Recorder {
    stats: SimStats,
    granule: usize,
    per_granule: u64,
    extra: u64,
}

impl Recorder {
    fn granule_for(&self, period: u64) -> usize {
        // first `extra` granules hold one more period than the rest
        let big = self.per_granule + 1;
        let cut = self.extra * big;
        if period < cut {
            (period / big) as usize
        } else {
            (self.extra + (period - cut) / self.per_granule) as usize
        }
    }

    fn hold(&mut self, state: &SystemState, class_counts: &[u64], dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let s = &mut self.stats;
        s.occupancy_time[state.tokens as usize][state.buffer.backlog() as usize] += dt;
        s.observed_time += dt;
        let g = &mut s.granules[self.granule];
        g.time += dt;
        for (k, &n) in class_counts.iter().enumerate() {
            if n > 0 {
                let w = n as f64 * dt;
                s.classes[k].backlog_integral += w;
                g.classes[k].backlog_integral += w;
            }
        }
    }

    fn counters(&mut self, class: usize) -> [&mut ClassCounters; 2] {
        let g = &mut self.stats.granules[self.granule].classes[class];
        let t = &mut self.stats.classes[class];
        [t, g]
    }
}

/// Simulates the variable-length filter for `params.horizon` periods.
pub fn simulate(
    traffic: &TrafficSpec<f64>,
    config: &FilterConfig<f64>,
    params: &SimParams,
) -> Result<SimStats> {
    params.validate()?;
    config.check_traffic(traffic)?;
    let bucket = config.bucket();
    let buffer = config.buffer();
    let tau = config.period();
    let classes = traffic.classes();

    let (time_rng, mut size_rng) = rngs(params.seed);
    let mut clock = ArrivalClock::new(traffic.rate(), time_rng);
    let sizes = WeightedIndex::new(traffic.probs())
        .map_err(|e| ModelError::InvalidTraffic(e.to_string()))?;

    let observed = params.horizon - params.warmup;
    let granules = (params.granules as u64).min(observed);
    let mut rec = Recorder {
        stats: SimStats {
            bucket,
            buffer,
            sizes: traffic.sizes().to_vec(),
            rate: traffic.rate(),
            observed_time: 0.0,
            observed_periods: observed,
            occupancy_time: vec![vec![0.0; buffer as usize + 1]; bucket as usize + 1],
            post_replenish: vec![vec![0; buffer as usize + 1]; bucket as usize + 1],
            classes: vec![ClassCounters::default(); classes],
            granules: vec![Granule::new(classes); granules as usize],
            lifetime: Lifetime {
                arrivals: vec![0; classes],
                losses: vec![0; classes],
                departures: vec![0; classes],
                in_buffer_at_end: vec![0; classes],
            },
            events: 0,
            invariant_checks: 0,
        },
        granule: 0,
        per_granule: observed / granules,
        extra: observed % granules,
    };
    let mut checker = params
        .check_invariants
        .then(|| InvariantChecker::new(bucket, buffer));

    let mut state = SystemState::idle(bucket);
    // FCFS companions of the buffer string: (class, arrival time)
    let mut queue: VecDeque<(usize, f64)> = VecDeque::new();
    let mut in_buffer = vec![0u64; classes];
    let mut now = 0.0;

    for n in 1..=params.horizon {
        let observing = n > params.warmup;
        if observing {
            rec.granule = rec.granule_for(n - 1 - params.warmup);
        }
        let token_at = n as f64 * tau;

        while clock.next < token_at {
            let t = clock.next;
            if observing {
                rec.hold(&state, &in_buffer, t - now);
            }
            now = t;
            let class = sizes.sample(&mut size_rng);
            let size = traffic.size(class);
            let (next, outcome) = match params.fault {
                Some(Fault::SkipTokenDecrement)
                    if state.buffer.is_empty() && state.tokens >= size =>
                {
                    let mut s = state.clone();
                    s.buffer = crate::statespace::BufferString::from_sizes(vec![size]);
                    (s, ArrivalOutcome::Queued)
                }
                _ => var_arrive_outcome(state, size, buffer),
            };
            state = next;
            rec.stats.lifetime.arrivals[class] += 1;
            match outcome {
                ArrivalOutcome::Transferred => rec.stats.lifetime.departures[class] += 1,
                ArrivalOutcome::Queued => {
                    queue.push_back((class, t));
                    in_buffer[class] += 1;
                }
                ArrivalOutcome::Dropped => rec.stats.lifetime.losses[class] += 1,
            }
            if observing {
                for c in rec.counters(class) {
                    c.arrivals += 1;
                    match outcome {
                        ArrivalOutcome::Transferred => c.departures += 1,
                        ArrivalOutcome::Dropped => c.losses += 1,
                        ArrivalOutcome::Queued => {}
                    }
                }
            }
            rec.stats.events += 1;
            if let Some(ch) = checker.as_mut() {
                ch.check_variable(t, &format!("arrival l={size}"), &state)?;
            }
            clock.advance();
        }

        if observing {
            rec.hold(&state, &in_buffer, token_at - now);
        }
        now = token_at;
        let before = state.buffer.len();
        state = var_replenish(state, bucket);
        if state.buffer.len() < before {
            let (class, arrived) = queue.pop_front().expect("queue mirrors buffer");
            in_buffer[class] -= 1;
            rec.stats.lifetime.departures[class] += 1;
            if observing {
                for c in rec.counters(class) {
                    c.departures += 1;
                    c.wait_sum += token_at - arrived;
                }
            }
        }
        if observing {
            rec.stats.post_replenish[state.tokens as usize][state.buffer.backlog() as usize] += 1;
        }
        rec.stats.events += 1;
        if let Some(ch) = checker.as_mut() {
            ch.check_variable(token_at, "token", &state)?;
        }
    }

    rec.stats.lifetime.in_buffer_at_end = in_buffer;
    rec.stats.invariant_checks = checker.map_or(0, |c| c.checks());
    Ok(rec.stats)
}

/// Fixed-length simulation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSimStats {
    pub bucket: u32,
    pub buffer: u32,
    /// Post-replenishment visits to each `S = Q - T + M`.
    pub post_replenish_s: Vec<u64>,
    pub events: u64,
    pub invariant_checks: u64,
}

impl FixedSimStats {
    pub fn s_distribution(&self) -> Vec<f64> {
        let n: u64 = self.post_replenish_s.iter().sum();
        self.post_replenish_s
            .iter()
            .map(|&c| c as f64 / n as f64)
            .collect()
    }
}

/// Simulates the one-token-per-packet filter, checking `Q · T = 0` after
/// every event when invariant checks are enabled.
pub fn simulate_fixed(
    rate: f64,
    config: &FilterConfig<f64>,
    params: &SimParams,
) -> Result<FixedSimStats> {
    params.validate()?;
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(ModelError::InvalidTraffic(format!(
            "rate must be non-negative, got {rate}"
        )));
    }
    let bucket = config.bucket();
    let buffer = config.buffer();
    let (time_rng, _) = rngs(params.seed);
    let mut clock = ArrivalClock::new(rate, time_rng);
    let mut checker = params
        .check_invariants
        .then(|| InvariantChecker::new(bucket, buffer));
    let mut out = FixedSimStats {
        bucket,
        buffer,
        post_replenish_s: vec![0; (bucket + buffer) as usize + 1],
        events: 0,
        invariant_checks: 0,
    };
    let mut state = FixedState::new(0, bucket);
    for n in 1..=params.horizon {
        let token_at = n as f64 * config.period();
        while clock.next < token_at {
            state = match params.fault {
                Some(Fault::SkipTokenDecrement) if state.t > 0 && state.q < buffer => {
                    FixedState::new(state.q + 1, state.t)
                }
                _ => fixed_arrive(state, buffer).0,
            };
            out.events += 1;
            if let Some(ch) = checker.as_mut() {
                ch.check_fixed(clock.next, "arrival", state)?;
            }
            clock.advance();
        }
        state = fixed_replenish(state, bucket);
        out.events += 1;
        if let Some(ch) = checker.as_mut() {
            ch.check_fixed(token_at, "token", state)?;
        }
        if n > params.warmup && state.is_exclusive() {
            out.post_replenish_s[state.to_unified(bucket).s as usize] += 1;
        }
    }
    out.invariant_checks = checker.map_or(0, |c| c.checks());
    Ok(out)
}

//! Simulation output: time-weighted occupancy, per-class counters and
//! batch-means confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analysis::OccupancyTable;
use crate::error::{ModelError, Result};

/// Per-class totals over some stretch of simulated time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCounters {
    pub arrivals: u64,
    pub losses: u64,
    /// Packets that left the ingress buffer (including instant transfers).
    pub departures: u64,
    /// Sum of buffer residence times of departed packets.
    pub wait_sum: f64,
    /// `∫ (packets of this class in the buffer) dt`.
    pub backlog_integral: f64,
}

impl ClassCounters {
    fn add(&mut self, other: &Self) {
        self.arrivals += other.arrivals;
        self.losses += other.losses;
        self.departures += other.departures;
        self.wait_sum += other.wait_sum;
        self.backlog_integral += other.backlog_integral;
    }
}

/// Partial sums for one contiguous slice of the observation window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Granule {
    pub time: f64,
    pub classes: Vec<ClassCounters>,
}

impl Granule {
    pub(crate) fn new(classes: usize) -> Self {
        Self {
            time: 0.0,
            classes: vec![ClassCounters::default(); classes],
        }
    }

    fn add(&mut self, other: &Self) {
        self.time += other.time;
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.add(b);
        }
    }
}

/// Whole-run counters, warmup included, for conservation checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lifetime {
    pub arrivals: Vec<u64>,
    pub losses: Vec<u64>,
    pub departures: Vec<u64>,
    pub in_buffer_at_end: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub bucket: u32,
    pub buffer: u32,
    pub sizes: Vec<u32>,
    pub rate: f64,
    /// Length of the observation window (post-warmup).
    pub observed_time: f64,
    pub observed_periods: u64,
    /// Time spent in each `(T, |z|)` cell during the observation window.
    pub occupancy_time: Vec<Vec<f64>>,
    /// Visits to each `(T, |z|)` cell immediately after a replenishment.
    pub post_replenish: Vec<Vec<u64>>,
    pub classes: Vec<ClassCounters>,
    pub granules: Vec<Granule>,
    pub lifetime: Lifetime,
    pub events: u64,
    pub invariant_checks: u64,
}

impl SimStats {
    /// Normalized time-average occupancy.
    pub fn occupancy(&self) -> OccupancyTable<f64> {
        let t = self.observed_time;
        OccupancyTable::from_cells(
            self.occupancy_time
                .iter()
                .map(|row| row.iter().map(|&x| x / t).collect())
                .collect(),
        )
    }

    /// Empirical distribution of `(T, |z|)` right after replenishment.
    pub fn post_replenish_distribution(&self) -> Vec<Vec<f64>> {
        let n: u64 = self.post_replenish.iter().flatten().sum();
        self.post_replenish
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / n as f64).collect())
            .collect()
    }

    /// Post-replenishment distribution of `S = |z| - T + M`. Only meaningful
    /// for unit packets, where `Q · T = 0`.
    pub fn post_replenish_s(&self) -> Vec<f64> {
        let m = self.bucket as usize;
        let mut out = vec![0.0; m + self.buffer as usize + 1];
        for (t, row) in self.post_replenish_distribution().iter().enumerate() {
            for (b, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    out[b + m - t] += p;
                }
            }
        }
        out
    }

    pub fn loss_ratio(&self, class: usize) -> f64 {
        let c = &self.classes[class];
        if c.arrivals == 0 {
            0.0
        } else {
            c.losses as f64 / c.arrivals as f64
        }
    }

    pub fn mean_wait(&self, class: usize) -> f64 {
        let c = &self.classes[class];
        if c.departures == 0 {
            0.0
        } else {
            c.wait_sum / c.departures as f64
        }
    }

    pub fn mean_backlog(&self, class: usize) -> f64 {
        self.classes[class].backlog_integral / self.observed_time
    }

    /// Accepted arrivals per unit time.
    pub fn effective_rate(&self, class: usize) -> f64 {
        let c = &self.classes[class];
        (c.arrivals - c.losses) as f64 / self.observed_time
    }

    /// Relative gap in Little's law, `|E_Q - rate · E_W| / E_Q`.
    pub fn little_gap(&self, class: usize) -> f64 {
        let lhs = self.mean_backlog(class);
        let rhs = self.effective_rate(class) * self.mean_wait(class);
        if lhs == 0.0 && rhs == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / lhs.max(rhs)
        }
    }

    /// Combines an independent replication of the same scenario.
    pub fn merge(&mut self, other: &SimStats) {
        self.observed_time += other.observed_time;
        self.observed_periods += other.observed_periods;
        for (a, b) in self.occupancy_time.iter_mut().zip(&other.occupancy_time) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.post_replenish.iter_mut().zip(&other.post_replenish) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.add(b);
        }
        self.granules.extend(other.granules.iter().cloned());
        let l = &mut self.lifetime;
        for (dst, src) in [
            (&mut l.arrivals, &other.lifetime.arrivals),
            (&mut l.losses, &other.lifetime.losses),
            (&mut l.departures, &other.lifetime.departures),
            (&mut l.in_buffer_at_end, &other.lifetime.in_buffer_at_end),
        ] {
            dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
        }
        self.events += other.events;
        self.invariant_checks += other.invariant_checks;
    }
}

/// Point estimate with a symmetric 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    /// Batch-means interval from per-batch estimates, using the Student t
    /// quantile with `n - 1` degrees of freedom.
    pub fn from_batches(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(ModelError::TooFewSamples {
                needed: 2,
                available: n,
            });
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let quantile = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        Ok(Self {
            mean,
            half_width: quantile * (var / n as f64).sqrt(),
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIntervals {
    pub loss_ratio: Interval,
    pub mean_wait: Interval,
    pub mean_backlog: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batches: usize,
    pub classes: Vec<ClassIntervals>,
}

/// Groups the recorded granules into `batches` contiguous batches and
/// builds per-class intervals for loss ratio, mean wait and mean backlog.
pub fn batch_confidence(stats: &SimStats, batches: usize) -> Result<BatchReport> {
    if batches < 2 {
        return Err(ModelError::TooFewSamples {
            needed: 2,
            available: batches,
        });
    }
    let g = stats.granules.len();
    if g < batches {
        return Err(ModelError::TooFewSamples {
            needed: batches,
            available: g,
        });
    }
    let classes = stats.sizes.len();
    let merged: Vec<Granule> = (0..batches)
        .map(|b| {
            let mut acc = Granule::new(classes);
            for gr in &stats.granules[b * g / batches..(b + 1) * g / batches] {
                acc.add(gr);
            }
            acc
        })
        .collect();

    let per_class = (0..classes)
        .map(|k| {
            let loss: Vec<f64> = merged
                .iter()
                .map(|b| {
                    let c = &b.classes[k];
                    if c.arrivals == 0 {
                        0.0
                    } else {
                        c.losses as f64 / c.arrivals as f64
                    }
                })
                .collect();
            let wait: Vec<f64> = merged
                .iter()
                .map(|b| {
                    let c = &b.classes[k];
                    if c.departures == 0 {
                        0.0
                    } else {
                        c.wait_sum / c.departures as f64
                    }
                })
                .collect();
            let backlog: Vec<f64> = merged
                .iter()
                .map(|b| {
                    if b.time > 0.0 {
                        b.classes[k].backlog_integral / b.time
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(ClassIntervals {
                loss_ratio: Interval::from_batches(&loss)?,
                mean_wait: Interval::from_batches(&wait)?,
                mean_backlog: Interval::from_batches(&backlog)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchReport {
        batches,
        classes: per_class,
    })
}

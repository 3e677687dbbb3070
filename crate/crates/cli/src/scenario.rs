//! Scenario files: schema, parsing with field-level diagnostics, and
//! conversion to core types.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use tbf_core::des::SimParams;
use tbf_core::{FilterConfig, ModelError, SolverOptions, TrafficSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Analytic,
    Simulate,
    Compare,
    CountStates,
    FixedLength,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Analytic => "analytic",
            Mode::Simulate => "simulate",
            Mode::Compare => "compare",
            Mode::CountStates => "count-states",
            Mode::FixedLength => "fixed-length",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    pub traffic: Traffic,
    pub filter: Filter,
    #[serde(default)]
    pub simulation: Simulation,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub counting: Counting,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Traffic {
    pub sizes: Vec<u32>,
    pub probs: Vec<f64>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter {
    pub bucket: u32,
    pub buffer: u32,
    #[serde(default = "one")]
    pub period: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    /// Replenishment periods.
    pub horizon: u64,
    /// Defaults to 10% of the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
    pub seed: u64,
    pub batches: usize,
    pub granules: usize,
    pub check_invariants: bool,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            warmup: None,
            seed: 1,
            batches: 10,
            granules: 1000,
            check_invariants: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub residual_tol: f64,
    pub expm_tol: f64,
    pub max_iters: usize,
}

impl Default for Solver {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            residual_tol: d.residual_tol,
            expm_tol: d.expm_tol,
            max_iters: d.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Counting {
    pub min_bound: u32,
    pub max_bound: u32,
}

impl Default for Counting {
    fn default() -> Self {
        Self {
            min_bound: 3,
            max_bound: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// Core types derived from a validated scenario.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub traffic: TrafficSpec,
    pub config: FilterConfig,
    pub solver: SolverOptions,
    pub sim: SimParams,
}

fn field_error(err: ModelError) -> anyhow::Error {
    match err {
        ModelError::InvalidTraffic(m) => anyhow::anyhow!("traffic.{m}"),
        ModelError::InvalidFilter(m) => anyhow::anyhow!("filter.{m}"),
        ModelError::PacketExceedsBuffer { size, buffer } => {
            anyhow::anyhow!(
                "filter.buffer: {buffer} is smaller than the largest packet size {size}"
            )
        }
        other => other.into(),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                anyhow::anyhow!("{}", e.inner())
            } else {
                anyhow::anyhow!("{path}: {}", e.inner())
            }
        })?;
        scenario.resolve()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("invalid scenario {}", path.display()))
    }

    pub fn warmup(&self) -> u64 {
        self.simulation
            .warmup
            .unwrap_or(self.simulation.horizon / 10)
    }

    /// Validates every section and builds the core inputs.
    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let t = &self.traffic;
        let traffic =
            TrafficSpec::new(t.sizes.clone(), t.probs.clone(), t.rate).map_err(field_error)?;
        let config = FilterConfig::new(self.filter.bucket, self.filter.buffer, self.filter.period)
            .map_err(field_error)?;
        config.check_traffic(&traffic).map_err(field_error)?;

        let s = &self.solver;
        for (name, v) in [("residual_tol", s.residual_tol), ("expm_tol", s.expm_tol)] {
            if !(v.is_finite() && v > 0.0) {
                bail!("solver.{name}: must be finite and positive, got {v}");
            }
        }
        if s.max_iters == 0 {
            bail!("solver.max_iters: must be >= 1");
        }

        let sim = &self.simulation;
        if sim.horizon <= self.warmup() {
            bail!(
                "simulation.horizon: must exceed warmup ({}), got {}",
                self.warmup(),
                sim.horizon
            );
        }
        if sim.batches < 2 {
            bail!("simulation.batches: must be >= 2, got {}", sim.batches);
        }
        if sim.granules < sim.batches {
            bail!(
                "simulation.granules: must be >= batches ({}), got {}",
                sim.batches,
                sim.granules
            );
        }
        if self.counting.min_bound > self.counting.max_bound {
            bail!(
                "counting.min_bound: {} exceeds max_bound {}",
                self.counting.min_bound,
                self.counting.max_bound
            );
        }
        if self.mode == Mode::FixedLength && t.sizes != [1] {
            bail!(
                "traffic.sizes: fixed-length mode needs unit packets [1], got {:?}",
                t.sizes
            );
        }
        if self.mode == Mode::FixedLength && (t.rate.is_nan() || t.rate <= 0.0) {
            bail!("traffic.rate: fixed-length mode needs a positive rate");
        }

        Ok(Resolved {
            traffic,
            config,
            solver: SolverOptions {
                residual_tol: s.residual_tol,
                expm_tol: s.expm_tol,
                max_iters: s.max_iters,
            },
            sim: SimParams {
                horizon: sim.horizon,
                warmup: self.warmup(),
                seed: sim.seed,
                granules: sim.granules,
                check_invariants: sim.check_invariants,
                fault: None,
            },
        })
    }
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid traffic specification: {0}")]
    InvalidTraffic(String),

    #[error("invalid filter configuration: {0}")]
    InvalidFilter(String),

    #[error("largest packet size {size} exceeds buffer capacity {buffer}")]
    PacketExceedsBuffer { size: u32, buffer: u32 },

    #[error("matrix is not a sub-generator: row {row} {reason}")]
    NotAGenerator { row: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),

    #[error("stationary iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("effective arrival rate of class {class} is zero; waiting time undefined")]
    ZeroEffectiveRate { class: usize },

    #[error("simulation parameters: {0}")]
    InvalidSimulation(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(Box<ViolationReport>),

    #[error("batch means need at least {needed} post-warmup samples, have {available}")]
    TooFewSamples { needed: usize, available: usize },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// A simulated state broke a structural invariant of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    pub message: String,
    /// Most recent events before the violation, oldest first.
    pub trace: Vec<String>,
}

impl std::fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)?;
        for line in &self.trace {
            write!(f, "\n  {line}")?;
        }
        Ok(())
    }
}

//! Post-event structural checks for simulated trajectories.

use std::collections::VecDeque;

use crate::dynamics::FixedState;
use crate::error::{ModelError, ViolationReport};
use crate::statespace::SystemState;

const TRACE_LEN: usize = 16;

/// Checks every post-event state and keeps a short trace for diagnostics.
///
/// Variable-length runs must keep `T ≤ M`, `|z| ≤ L`, and a stuck head
/// (`z ≠ ε ⟹ T < z_1`); fixed-length runs must keep `Q · T = 0`.
#[derive(Debug, Clone)]
pub struct InvariantChecker {
    bucket: u32,
    buffer: u32,
    trace: VecDeque<String>,
    checks: u64,
}

impl InvariantChecker {
    pub fn new(bucket: u32, buffer: u32) -> Self {
        Self {
            bucket,
            buffer,
            trace: VecDeque::with_capacity(TRACE_LEN),
            checks: 0,
        }
    }

    pub fn checks(&self) -> u64 {
        self.checks
    }

    fn record(&mut self, line: String) {
        if self.trace.len() == TRACE_LEN {
            self.trace.pop_front();
        }
        self.trace.push_back(line);
        self.checks += 1;
    }

    fn fail(&self, message: String) -> ModelError {
        ModelError::InvariantViolation(Box::new(ViolationReport {
            message,
            trace: self.trace.iter().cloned().collect(),
        }))
    }

    pub fn check_variable(
        &mut self,
        time: f64,
        event: &str,
        state: &SystemState,
    ) -> Result<(), ModelError> {
        self.record(format!("t={time:.6} {event} -> {state}"));
        if state.tokens > self.bucket {
            return Err(self.fail(format!(
                "token count {} exceeds bucket {}",
                state.tokens, self.bucket
            )));
        }
        let backlog = state.buffer.backlog();
        if backlog > self.buffer {
            return Err(self.fail(format!("backlog {backlog} exceeds buffer {}", self.buffer)));
        }
        if let Some(head) = state.buffer.head() {
            if state.tokens >= head {
                return Err(self.fail(format!(
                    "head packet of size {head} waits although {} tokens are stored",
                    state.tokens
                )));
            }
        }
        Ok(())
    }

    pub fn check_fixed(
        &mut self,
        time: f64,
        event: &str,
        state: FixedState,
    ) -> Result<(), ModelError> {
        self.record(format!(
            "t={time:.6} {event} -> (Q={}, T={})",
            state.q, state.t
        ));
        if !state.is_exclusive() {
            return Err(self.fail(format!(
                "backlog {} and {} stored tokens coexist",
                state.q, state.t
            )));
        }
        if state.q > self.buffer || state.t > self.bucket {
            return Err(self.fail(format!(
                "state (Q={}, T={}) out of bounds",
                state.q, state.t
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::BufferString;

    #[test]
    fn accepts_valid_states() {
        let mut c = InvariantChecker::new(5, 5);
        assert!(c
            .check_variable(0.0, "arrival", &SystemState::idle(5))
            .is_ok());
        let stuck = SystemState::new(1, BufferString::from_sizes(vec![3, 2]));
        assert!(c.check_variable(0.5, "arrival", &stuck).is_ok());
        assert!(c.check_fixed(0.0, "token", FixedState::new(3, 0)).is_ok());
        assert_eq!(c.checks(), 3);
    }

    #[test]
    fn reports_violations_with_trace() {
        let mut c = InvariantChecker::new(5, 5);
        c.check_variable(0.0, "token", &SystemState::idle(3))
            .unwrap();
        let bad = SystemState::new(3, BufferString::from_sizes(vec![2]));
        match c.check_variable(0.1, "arrival", &bad) {
            Err(ModelError::InvariantViolation(r)) => {
                assert!(r.message.contains("head packet"));
                assert_eq!(r.trace.len(), 2);
            }
            other => panic!("expected violation, got {other:?}"),
        }
        assert!(c
            .check_fixed(0.2, "arrival", FixedState::new(1, 1))
            .is_err());
        let over = SystemState::new(0, BufferString::from_sizes(vec![4, 4]));
        assert!(c.check_variable(0.3, "arrival", &over).is_err());
    }
}

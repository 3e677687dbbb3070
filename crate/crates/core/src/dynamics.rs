//! Single-event transition functions for both filter variants.
//!
//! Fixed packet length: one token per packet, backlog `Q` in packets.
//! Variable packet length: the full buffer string is tracked and a packet
//! of size `l` consumes `l` tokens when it leaves the ingress buffer.
//!
//! All functions are pure; the simulator and the generator builders both
//! go through them.

use serde::{Deserialize, Serialize};

use crate::statespace::SystemState;

/// Fixed-length filter state: backlog in packets and stored tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedState {
    pub q: u32,
    pub t: u32,
}

impl FixedState {
    pub fn new(q: u32, t: u32) -> Self {
        Self { q, t }
    }

    /// `Q · T = 0`: tokens and backlog never coexist.
    pub fn is_exclusive(&self) -> bool {
        self.q == 0 || self.t == 0
    }

    pub fn to_unified(self, bucket: u32) -> UnifiedCoord {
        UnifiedCoord::from_fixed(self, bucket)
    }
}

/// Collapsed coordinate `K = Q - T` and its shift `S = K + M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnifiedCoord {
    pub k: i64,
    pub s: u32,
}

impl UnifiedCoord {
    pub fn from_k(k: i64, bucket: u32) -> Self {
        let s = k + bucket as i64;
        debug_assert!(s >= 0);
        Self { k, s: s as u32 }
    }

    pub fn from_s(s: u32, bucket: u32) -> Self {
        Self {
            k: s as i64 - bucket as i64,
            s,
        }
    }

    pub fn from_fixed(state: FixedState, bucket: u32) -> Self {
        Self::from_k(state.q as i64 - state.t as i64, bucket)
    }

    pub fn to_fixed(self) -> FixedState {
        FixedState {
            q: self.k.max(0) as u32,
            t: (-self.k.min(0)) as u32,
        }
    }
}

/// Token arrival in the fixed-length filter.
pub fn fixed_replenish(state: FixedState, bucket: u32) -> FixedState {
    if state.q > 0 {
        FixedState::new(state.q - 1, state.t)
    } else {
        FixedState::new(0, (state.t + 1).min(bucket))
    }
}

/// Packet arrival in the fixed-length filter. Returns the new state and
/// whether the packet was accepted (transferred or queued).
pub fn fixed_arrive(state: FixedState, buffer: u32) -> (FixedState, bool) {
    if state.t > 0 {
        (FixedState::new(state.q, state.t - 1), true)
    } else if state.q >= buffer {
        (state, false)
    } else {
        (FixedState::new(state.q + 1, 0), true)
    }
}

/// One period of the Periodic Transfer chain:
/// `S⁺ = max{0, min{L+M, S + a} - 1}`.
pub fn s_step(s: u32, arrivals: u64, buffer: u32, bucket: u32) -> u32 {
    let cap = (buffer + bucket) as u64;
    ((s as u64 + arrivals).min(cap).saturating_sub(1)) as u32
}

/// One period of the M/D/1/L+M token-level chain. Differs from
/// [`s_step`] only when the chain starts the period at zero.
pub fn md1_step(s: u32, arrivals: u64, buffer: u32, bucket: u32) -> u32 {
    if s > 0 {
        s_step(s, arrivals, buffer, bucket)
    } else {
        arrivals.min((buffer + bucket) as u64) as u32
    }
}

/// Token arrival in the variable-length filter. At most one packet leaves.
pub fn var_replenish(mut state: SystemState, bucket: u32) -> SystemState {
    match state.buffer.head() {
        Some(head) if state.tokens + 1 >= head => {
            state.tokens = state.tokens + 1 - head;
            state.buffer.pop_head();
            state
        }
        _ => {
            state.tokens = (state.tokens + 1).min(bucket);
            state
        }
    }
}

/// What happened to an arriving packet in the variable-length filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrivalOutcome {
    /// Empty buffer with enough tokens: the packet passed immediately.
    Transferred,
    Queued,
    Dropped,
}

impl ArrivalOutcome {
    pub fn accepted(self) -> bool {
        !matches!(self, ArrivalOutcome::Dropped)
    }
}

/// Packet arrival in the variable-length filter, reporting the outcome.
pub fn var_arrive_outcome(
    mut state: SystemState,
    size: u32,
    buffer: u32,
) -> (SystemState, ArrivalOutcome) {
    if state.buffer.is_empty() {
        if state.tokens >= size {
            state.tokens -= size;
            (state, ArrivalOutcome::Transferred)
        } else {
            state.buffer.push(size);
            (state, ArrivalOutcome::Queued)
        }
    } else if state.buffer.backlog() + size <= buffer {
        // FCFS: tokens are reserved for the head, never the newcomer.
        state.buffer.push(size);
        (state, ArrivalOutcome::Queued)
    } else {
        (state, ArrivalOutcome::Dropped)
    }
}

/// Packet arrival in the variable-length filter. Returns the new state and
/// whether the packet was accepted.
pub fn var_arrive(state: SystemState, size: u32, buffer: u32) -> (SystemState, bool) {
    let (s, outcome) = var_arrive_outcome(state, size, buffer);
    (s, outcome.accepted())
}

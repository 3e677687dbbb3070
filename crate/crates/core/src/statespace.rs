//! Enumeration, indexing and counting of the token bucket state space
//! `{0..M} x Z*_L`.
//!
//! A state is a token count together with the ordered content of the
//! ingress buffer, recorded packet by packet. Buffer strings are ordered
//! lexicographically by packet size with the empty string first and a
//! proper prefix ahead of its extensions.
//!
//! Global state indices are laid out so that the partition used by the
//! analysis is contiguous: the `M + 1` empty-buffer states `(T, ε)` come
//! first (index `T`), followed by one block of `R = #Z*_L - 1` non-empty
//! states per token level, each block in string order.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{ModelError, Result};
use crate::scalar::Scalar;

/// Compound Poisson input: packet-size alphabet, class probabilities and
/// total arrival rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec<S> {
    sizes: Vec<u32>,
    probs: Vec<S>,
    rate: S,
}

impl<S: Scalar> TrafficSpec<S> {
    /// Validates and builds a traffic description.
    ///
    /// Sizes must be strictly increasing and positive; probabilities must be
    /// positive and sum to one within 1e-12. A zero rate is accepted and
    /// describes an idle input.
    pub fn new(sizes: Vec<u32>, probs: Vec<S>, rate: S) -> Result<Self> {
        if sizes.is_empty() {
            return Err(ModelError::InvalidTraffic(
                "sizes: alphabet is empty".into(),
            ));
        }
        if sizes[0] == 0 {
            return Err(ModelError::InvalidTraffic(
                "sizes: packet sizes must be >= 1".into(),
            ));
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidTraffic(
                "sizes: must be strictly increasing".into(),
            ));
        }
        if probs.len() != sizes.len() {
            return Err(ModelError::InvalidTraffic(format!(
                "probs: expected {} entries, got {}",
                sizes.len(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > S::zero())) {
            return Err(ModelError::InvalidTraffic(format!(
                "probs: entries must be positive, got {p}"
            )));
        }
        let total: S = probs.iter().copied().sum();
        if (total - S::one()).abs() > S::lit(1e-12).max(S::epsilon() * S::lit(8.0)) {
            return Err(ModelError::InvalidTraffic(format!(
                "probs: must sum to 1, sum is {total}"
            )));
        }
        if !(rate.is_finite() && rate >= S::zero()) {
            return Err(ModelError::InvalidTraffic(format!(
                "rate: must be finite and non-negative, got {rate}"
            )));
        }
        Ok(Self { sizes, probs, rate })
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn rate(&self) -> S {
        self.rate
    }

    /// Number of packet classes `W`.
    pub fn classes(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, class: usize) -> u32 {
        self.sizes[class]
    }

    pub fn prob(&self, class: usize) -> S {
        self.probs[class]
    }

    /// Arrival rate of a single class, `u_k λ`.
    pub fn class_rate(&self, class: usize) -> S {
        self.probs[class] * self.rate
    }

    pub fn max_size(&self) -> u32 {
        *self.sizes.last().expect("non-empty alphabet")
    }

    pub fn min_size(&self) -> u32 {
        self.sizes[0]
    }

    pub fn class_of(&self, size: u32) -> Option<usize> {
        self.sizes.binary_search(&size).ok()
    }

    /// Same alphabet and class mix with a different total rate.
    pub fn with_rate(&self, rate: S) -> Result<Self> {
        Self::new(self.sizes.clone(), self.probs.clone(), rate)
    }
}

/// Bucket capacity `M`, buffer capacity `L` (both in tokens) and the
/// replenishment period `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig<S> {
    bucket: u32,
    buffer: u32,
    period: S,
}

impl<S: Scalar> FilterConfig<S> {
    pub fn new(bucket: u32, buffer: u32, period: S) -> Result<Self> {
        if buffer == 0 {
            return Err(ModelError::InvalidFilter("buffer: must be >= 1".into()));
        }
        if !(period.is_finite() && period > S::zero()) {
            return Err(ModelError::InvalidFilter(format!(
                "period: must be finite and positive, got {period}"
            )));
        }
        Ok(Self {
            bucket,
            buffer,
            period,
        })
    }

    pub fn bucket(&self) -> u32 {
        self.bucket
    }

    pub fn buffer(&self) -> u32 {
        self.buffer
    }

    pub fn period(&self) -> S {
        self.period
    }

    /// Rejects pairings in which some packet could never fit the buffer.
    pub fn check_traffic(&self, traffic: &TrafficSpec<S>) -> Result<()> {
        if traffic.max_size() > self.buffer {
            return Err(ModelError::PacketExceedsBuffer {
                size: traffic.max_size(),
                buffer: self.buffer,
            });
        }
        Ok(())
    }
}

/// Ordered buffer content, head first. The derived ordering is the
/// lexicographic order used for enumeration.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BufferString(Vec<u32>);

impl BufferString {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_sizes(sizes: impl Into<Vec<u32>>) -> Self {
        Self(sizes.into())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of packets (not tokens).
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn head(&self) -> Option<u32> {
        self.0.first().copied()
    }

    pub fn packets(&self) -> &[u32] {
        &self.0
    }

    /// Total backlog `|z|` in tokens.
    pub fn backlog(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Number of buffered packets of the given size.
    pub fn count_of(&self, size: u32) -> usize {
        self.0.iter().filter(|&&s| s == size).count()
    }

    pub(crate) fn push(&mut self, size: u32) {
        self.0.push(size);
    }

    pub(crate) fn pop_head(&mut self) -> Option<u32> {
        if self.0.is_empty() {
            None
        } else {
            Some(self.0.remove(0))
        }
    }
}

impl fmt::Display for BufferString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        f.write_str("(")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str(")")
    }
}

pub fn backlog(z: &BufferString) -> u32 {
    z.backlog()
}

/// `Qc(k, z)`: occurrences of class `k` packets in `z`.
pub fn class_count(sizes: &[u32], class: usize, z: &BufferString) -> usize {
    z.count_of(sizes[class])
}

/// Token count together with buffer content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemState {
    pub tokens: u32,
    pub buffer: BufferString,
}

impl SystemState {
    pub fn new(tokens: u32, buffer: BufferString) -> Self {
        Self { tokens, buffer }
    }

    pub fn idle(tokens: u32) -> Self {
        Self::new(tokens, BufferString::empty())
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(T={}, z={})", self.tokens, self.buffer)
    }
}

/// All strings over `sizes` with backlog at most `bound`, in lexicographic
/// order. `sizes` must be strictly increasing.
pub fn enumerate_strings(sizes: &[u32], bound: u32) -> Vec<BufferString> {
    fn descend(sizes: &[u32], room: u32, prefix: &mut Vec<u32>, out: &mut Vec<BufferString>) {
        for &s in sizes {
            if s > room {
                break;
            }
            prefix.push(s);
            out.push(BufferString(prefix.clone()));
            descend(sizes, room - s, prefix, out);
            prefix.pop();
        }
    }

    let mut out = vec![BufferString::empty()];
    descend(sizes, bound, &mut Vec::new(), &mut out);
    out
}

/// `#Z*_L` by dynamic programming over exact backlog values.
///
/// `c(n)` counts strings with backlog exactly `n`; the result is
/// `Σ_{n ≤ bound} c(n)`, the empty string included.
pub fn count_strings(sizes: &[u32], bound: u32) -> u128 {
    let bound = bound as usize;
    let mut exact = vec![0u128; bound + 1];
    exact[0] = 1;
    for n in 1..=bound {
        exact[n] = sizes
            .iter()
            .map(|&s| s as usize)
            .filter(|&s| s <= n)
            .map(|s| exact[n - s])
            .sum();
    }
    exact.iter().sum()
}

/// Growth estimate `β^L` with `β = W^(1/min Z)`.
///
/// This is a heuristic envelope, not a certified upper bound: for a
/// singleton alphabet it evaluates to 1 while `L / l + 1` strings exist.
pub fn cardinality_bound(sizes: &[u32], bound: u32) -> f64 {
    let w = sizes.len() as f64;
    let min = *sizes.iter().min().expect("non-empty alphabet") as f64;
    w.powf(bound as f64 / min)
}

/// Indexed state space with lookup tables for the string operations the
/// generators need.
#[derive(Debug, Clone)]
pub struct StateSpace {
    bucket: u32,
    buffer: u32,
    sizes: Vec<u32>,
    strings: Vec<BufferString>,
    string_index: HashMap<BufferString, usize>,
    backlogs: Vec<u32>,
    /// `append[j][k]`: index of `z_j · l_k`, if it fits.
    append: Vec<Vec<Option<usize>>>,
    /// `tail[j]`: index of `z_j` without its head (0 for ε).
    tail: Vec<usize>,
}

impl StateSpace {
    pub fn build<S: Scalar>(traffic: &TrafficSpec<S>, config: &FilterConfig<S>) -> Result<Self> {
        config.check_traffic(traffic)?;
        Ok(Self::from_parts(
            traffic.sizes(),
            config.bucket(),
            config.buffer(),
        ))
    }

    fn from_parts(sizes: &[u32], bucket: u32, buffer: u32) -> Self {
        let strings = enumerate_strings(sizes, buffer);
        let string_index: HashMap<_, _> = strings
            .iter()
            .enumerate()
            .map(|(i, z)| (z.clone(), i))
            .collect();
        let backlogs = strings.iter().map(BufferString::backlog).collect();
        let append = strings
            .iter()
            .map(|z| {
                sizes
                    .iter()
                    .map(|&s| {
                        let mut ext = z.clone();
                        ext.push(s);
                        string_index.get(&ext).copied()
                    })
                    .collect()
            })
            .collect();
        let tail = strings
            .iter()
            .map(|z| {
                let rest = BufferString(z.packets().iter().skip(1).copied().collect());
                string_index[&rest]
            })
            .collect();
        Self {
            bucket,
            buffer,
            sizes: sizes.to_vec(),
            strings,
            string_index,
            backlogs,
            append,
            tail,
        }
    }

    pub fn bucket(&self) -> u32 {
        self.bucket
    }

    pub fn buffer(&self) -> u32 {
        self.buffer
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    /// Number of token levels, `M + 1`.
    pub fn levels(&self) -> usize {
        self.bucket as usize + 1
    }

    /// `N = (M + 1) · #Z*_L`.
    pub fn len(&self) -> usize {
        self.levels() * self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `#Z*_L`, empty string included.
    pub fn string_count(&self) -> usize {
        self.strings.len()
    }

    /// `R = #Z*_L - 1`, the size of each per-level non-empty block.
    pub fn nonempty_count(&self) -> usize {
        self.strings.len() - 1
    }

    pub fn strings(&self) -> &[BufferString] {
        &self.strings
    }

    pub fn string(&self, j: usize) -> &BufferString {
        &self.strings[j]
    }

    pub fn string_index(&self, z: &BufferString) -> Option<usize> {
        self.string_index.get(z).copied()
    }

    pub fn backlog_of(&self, j: usize) -> u32 {
        self.backlogs[j]
    }

    pub fn append_index(&self, j: usize, class: usize) -> Option<usize> {
        self.append[j][class]
    }

    pub fn tail_index(&self, j: usize) -> usize {
        self.tail[j]
    }

    /// Index of the single-packet string `(l_k)`.
    pub fn singleton_index(&self, class: usize) -> usize {
        self.append[0][class].expect("every packet size fits the buffer")
    }

    pub fn class_count(&self, class: usize, j: usize) -> usize {
        self.strings[j].count_of(self.sizes[class])
    }

    /// Global index of `(tokens, z_j)`.
    pub fn index(&self, tokens: u32, j: usize) -> usize {
        debug_assert!(tokens <= self.bucket && j < self.strings.len());
        if j == 0 {
            tokens as usize
        } else {
            self.levels() + tokens as usize * self.nonempty_count() + (j - 1)
        }
    }

    /// Inverse of [`StateSpace::index`].
    pub fn decompose(&self, i: usize) -> (u32, usize) {
        let levels = self.levels();
        if i < levels {
            (i as u32, 0)
        } else {
            let r = self.nonempty_count();
            let off = i - levels;
            ((off / r) as u32, off % r + 1)
        }
    }

    pub fn index_of(&self, state: &SystemState) -> Option<usize> {
        if state.tokens > self.bucket {
            return None;
        }
        let j = self.string_index(&state.buffer)?;
        Some(self.index(state.tokens, j))
    }

    pub fn state(&self, i: usize) -> SystemState {
        let (t, j) = self.decompose(i);
        SystemState::new(t, self.strings[j].clone())
    }

    pub fn states(&self) -> impl Iterator<Item = SystemState> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    /// Index range of the shared empty-buffer block.
    pub fn empty_block(&self) -> Range<usize> {
        0..self.levels()
    }

    /// Index range of the non-empty block at token level `tokens`.
    pub fn level_block(&self, tokens: u32) -> Range<usize> {
        let start = self.levels() + tokens as usize * self.nonempty_count();
        start..start + self.nonempty_count()
    }

    /// Canonical start state `(M, ε)`.
    pub fn full_bucket_index(&self) -> usize {
        self.bucket as usize
    }

    /// States reachable from `(M, ε)` under arrivals and replenishments.
    ///
    /// Everything outside the mask carries zero stationary mass.
    pub fn reachable_mask(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::new();
        let start = self.full_bucket_index();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let state = self.state(i);
            let mut next = vec![dynamics::var_replenish(state.clone(), self.bucket)];
            for &s in &self.sizes {
                let (after, accepted) = dynamics::var_arrive(state.clone(), s, self.buffer);
                if accepted {
                    next.push(after);
                }
            }
            for n in next {
                let j = self
                    .index_of(&n)
                    .expect("dynamics stay inside the state space");
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }
}

/// Builds the state space for a validated traffic/filter pair.
pub fn build_state_space<S: Scalar>(
    traffic: &TrafficSpec<S>,
    config: &FilterConfig<S>,
) -> Result<StateSpace> {
    StateSpace::build(traffic, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(v: &[u32]) -> BufferString {
        BufferString::from_sizes(v.to_vec())
    }

    /// Brute force: all strings of at most `bound` packets, filtered by
    /// backlog, then sorted.
    fn brute_strings(sizes: &[u32], bound: u32) -> Vec<BufferString> {
        let mut layer = vec![Vec::<u32>::new()];
        let mut all = vec![];
        for _ in 0..=bound {
            let mut next = vec![];
            for p in &layer {
                if p.iter().sum::<u32>() <= bound {
                    all.push(BufferString(p.clone()));
                }
                for &s in sizes {
                    let mut q = p.clone();
                    q.push(s);
                    next.push(q);
                }
            }
            layer = next;
        }
        all.sort();
        all.dedup();
        all
    }

    #[test]
    fn enumerate_small_alphabet() {
        assert_eq!(
            enumerate_strings(&[1, 2], 2),
            vec![z(&[]), z(&[1]), z(&[1, 1]), z(&[2])]
        );
        assert_eq!(brute_strings(&[1, 2], 2), enumerate_strings(&[1, 2], 2));
        assert_eq!(enumerate_strings(&[1], 0), vec![z(&[])]);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for sizes in [&[1u32, 2, 3][..], &[2, 3], &[1, 4], &[3, 4, 5, 6]] {
            for bound in 0..=7 {
                assert_eq!(enumerate_strings(sizes, bound), brute_strings(sizes, bound));
            }
        }
    }

    #[test]
    fn counts() {
        assert_eq!(count_strings(&[1, 2, 3, 4], 10), 833);
        assert_eq!(enumerate_strings(&[1, 2, 3, 4], 10).len(), 833);
        assert_eq!(count_strings(&[2], 4), 3);
        assert_eq!(count_strings(&[3, 4, 5, 6], 0), 1);
        assert_eq!(count_strings(&[1, 2, 3, 4], 5), 31);
    }

    #[test]
    fn bound_estimates() {
        assert_eq!(cardinality_bound(&[1, 2, 3, 4], 7), 16384.0);
        assert!((cardinality_bound(&[3, 4, 5, 6], 3) - 4.0).abs() < 1e-12);
        assert_eq!(cardinality_bound(&[2], 4), 1.0);
        assert_eq!(cardinality_bound(&[5], 11), 1.0);
    }

    #[test]
    fn bound_holds_for_example_alphabets() {
        for sizes in [[1u32, 2, 3, 4], [3, 4, 5, 6]] {
            for bound in 3..=10 {
                assert!(count_strings(&sizes, bound) as f64 <= cardinality_bound(&sizes, bound));
            }
        }
    }

    #[test]
    fn backlog_and_class_count() {
        let s = z(&[3, 1, 3]);
        assert_eq!(backlog(&s), 7);
        assert_eq!(class_count(&[1, 3], 1, &s), 2);
        assert_eq!(backlog(&BufferString::empty()), 0);
        assert_eq!(class_count(&[1, 3], 0, &BufferString::empty()), 0);
    }

    #[test]
    fn state_space_sizes() {
        let t = TrafficSpec::new(vec![1, 2], vec![0.5, 0.5], 1.0).unwrap();
        let space = build_state_space(&t, &FilterConfig::new(1, 2, 1.0).unwrap()).unwrap();
        assert_eq!(space.len(), 8);

        let t = TrafficSpec::new(vec![1, 2, 3, 4], vec![0.4, 0.3, 0.2, 0.1], 0.5).unwrap();
        let space = build_state_space(&t, &FilterConfig::new(5, 5, 1.0).unwrap()).unwrap();
        assert_eq!(space.len(), 186);
        assert_eq!(space.nonempty_count(), 30);

        let t = TrafficSpec::new(vec![1], vec![1.0], 1.0).unwrap();
        let space = build_state_space(&t, &FilterConfig::new(0, 1, 1.0).unwrap()).unwrap();
        let states: Vec<_> = space.states().collect();
        assert_eq!(
            states,
            vec![SystemState::idle(0), SystemState::new(0, z(&[1]))]
        );
    }

    #[test]
    fn rejects_oversized_packets() {
        let t = TrafficSpec::new(vec![1, 6], vec![0.5, 0.5], 1.0).unwrap();
        let err = build_state_space(&t, &FilterConfig::new(5, 5, 1.0).unwrap()).unwrap_err();
        assert_eq!(err, ModelError::PacketExceedsBuffer { size: 6, buffer: 5 });
    }

    #[test]
    fn traffic_validation() {
        assert!(TrafficSpec::new(vec![], Vec::<f64>::new(), 1.0).is_err());
        assert!(TrafficSpec::new(vec![2, 1], vec![0.5, 0.5], 1.0).is_err());
        assert!(TrafficSpec::new(vec![0, 1], vec![0.5, 0.5], 1.0).is_err());
        assert!(TrafficSpec::new(vec![1, 2], vec![0.5, 0.6], 1.0).is_err());
        assert!(TrafficSpec::new(vec![1, 2], vec![1.0, 0.0], 1.0).is_err());
        assert!(TrafficSpec::new(vec![1, 2], vec![0.5, 0.5], -1.0).is_err());
        assert!(FilterConfig::new(1, 0, 1.0).is_err());
        assert!(FilterConfig::new(1, 1, 0.0).is_err());
    }

    #[test]
    fn index_layout_is_partitioned() {
        let t = TrafficSpec::new(vec![1, 2], vec![0.5, 0.5], 1.0).unwrap();
        let space = build_state_space(&t, &FilterConfig::new(2, 3, 1.0).unwrap()).unwrap();
        assert_eq!(space.empty_block(), 0..3);
        for tok in 0..=2 {
            for i in space.level_block(tok) {
                let s = space.state(i);
                assert_eq!(s.tokens, tok);
                assert!(!s.buffer.is_empty());
            }
        }
        assert_eq!(space.state(space.full_bucket_index()), SystemState::idle(2));
    }

    #[test]
    fn unreachable_states_exist_but_start_is_reachable() {
        let t = TrafficSpec::new(vec![1, 2, 3, 4], vec![0.4, 0.3, 0.2, 0.1], 0.5).unwrap();
        let space = build_state_space(&t, &FilterConfig::new(5, 5, 1.0).unwrap()).unwrap();
        let mask = space.reachable_mask();
        assert!(mask[space.full_bucket_index()]);
        // (T, z) with T >= head is never entered
        let bad = space.index_of(&SystemState::new(4, z(&[1]))).unwrap();
        assert!(!mask[bad]);
        for (i, &r) in mask.iter().enumerate() {
            let s = space.state(i);
            if r {
                if let Some(h) = s.buffer.head() {
                    assert!(s.tokens < h, "reachable {s} violates head-stuck");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn alphabet() -> impl Strategy<Value = Vec<u32>> {
            proptest::collection::btree_set(1u32..=6, 1..=6).prop_map(|s| s.into_iter().collect())
        }

        proptest! {
            #[test]
            fn count_equals_enumeration(sizes in alphabet(), bound in 0u32..=12) {
                let list = enumerate_strings(&sizes, bound);
                prop_assert_eq!(count_strings(&sizes, bound), list.len() as u128);
                prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
            }

            #[test]
            fn count_monotone(sizes in alphabet(), bound in 0u32..=11, extra in 1u32..=6) {
                prop_assert!(count_strings(&sizes, bound) <= count_strings(&sizes, bound + 1));
                let mut bigger = sizes.clone();
                if !bigger.contains(&extra) {
                    bigger.push(extra);
                    bigger.sort_unstable();
                }
                prop_assert!(count_strings(&sizes, bound) <= count_strings(&bigger, bound));
            }

            #[test]
            fn index_is_bijection(sizes in alphabet(), extra in 0u32..=4, bucket in 0u32..=3) {
                let buffer = *sizes.last().unwrap() + extra;
                let space = StateSpace::from_parts(&sizes, bucket, buffer);
                prop_assert_eq!(space.len(), (bucket as usize + 1) * count_strings(&sizes, buffer) as usize);
                for i in 0..space.len() {
                    prop_assert_eq!(space.index_of(&space.state(i)), Some(i));
                }
            }
        }
    }
}

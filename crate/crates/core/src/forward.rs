//! Rescaled forward evaluation of `[1 1] R_N ... R_1 D0` shared by all
//! three likelihood models.
//!
//! Every model reduces to a 2x2 step matrix per interval whose entry
//! `(b, a)` is `P(count, next state = b | current state = a)`. The matrices
//! depend on the data only through the count, so each model builds a
//! [`StepTable`] indexed by count and the trace is folded through it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::StatePrior;

/// Largest trace length accepted by the exhaustive path-sum oracles.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// One interval's 2x2 joint count-and-transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMatrix {
    /// `entries[b][a] = P(c, s_t = b | s_{t-1} = a)`.
    pub entries: [[f64; 2]; 2],
    /// Log of a factor already divided out of `entries`.
    pub log_scale: f64,
}

impl StepMatrix {
    pub fn new(entries: [[f64; 2]; 2]) -> Self {
        Self {
            entries,
            log_scale: 0.0,
        }
    }

    pub fn get(&self, next: usize, prev: usize) -> f64 {
        self.entries[next][prev]
    }

    /// Column sum: `P(c | s_{t-1} = prev)` (up to the stored scale).
    pub fn column_sum(&self, prev: usize) -> f64 {
        self.entries[0][prev] + self.entries[1][prev]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.entries;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Row vector times matrix: `u^T R`.
    pub fn apply_left(&self, u: [f64; 2]) -> [f64; 2] {
        let m = &self.entries;
        [u[0] * m[0][0] + u[1] * m[1][0], u[0] * m[0][1] + u[1] * m[1][1]]
    }
}

/// Step matrices for counts `0..len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTable {
    entries: Vec<[[f64; 2]; 2]>,
}

impl StepTable {
    pub fn from_entries(entries: Vec<[[f64; 2]; 2]>) -> Self {
        Self { entries }
    }

    /// Builds a table for counts `0..=max_count` from a per-count constructor.
    pub fn build(max_count: u32, mut f: impl FnMut(u32) -> [[f64; 2]; 2]) -> Self {
        Self {
            entries: (0..=max_count).map(&mut f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn matrix(&self, count: u32) -> Option<StepMatrix> {
        self.entries.get(count as usize).map(|e| StepMatrix::new(*e))
    }

    pub(crate) fn raw(&self) -> &[[[f64; 2]; 2]] {
        &self.entries
    }

    pub(crate) fn check_covers(&self, counts: &[u32]) -> Result<()> {
        let max = counts.iter().copied().max().unwrap_or(0);
        if max as usize >= self.entries.len() {
            return Err(Error::CountBeyondTruncation {
                count: max,
                c_max: self.entries.len().saturating_sub(1),
            });
        }
        Ok(())
    }
}

/// Natural log of `P(counts | parameters)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogLikelihood(pub f64);

impl LogLikelihood {
    pub fn value(&self) -> f64 {
        self.0
    }

    /// True when no hidden path can produce the data.
    pub fn is_impossible(&self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

/// Running sum of logs with deferred `ln` calls.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogAccumulator {
    log: f64,
    scale: f64,
}

impl LogAccumulator {
    pub(crate) fn new() -> Self {
        Self { log: 0.0, scale: 1.0 }
    }

    #[inline]
    pub(crate) fn push(&mut self, factor: f64) {
        if factor < 1e-150 {
            self.log += factor.ln();
            return;
        }
        self.scale *= factor;
        if self.scale < 1e-150 {
            self.log += self.scale.ln();
            self.scale = 1.0;
        }
    }

    pub(crate) fn total(&self) -> f64 {
        self.log + self.scale.ln()
    }
}

/// Forward pass with per-step sum normalization. Returns the final
/// normalized state vector (the filtered distribution of `s_N`) and the
/// log-likelihood.
pub(crate) fn forward_raw(counts: &[u32], table: &[[[f64; 2]; 2]], prior: [f64; 2]) -> ([f64; 2], f64) {
    let (mut v0, mut v1) = (prior[0], prior[1]);
    let mut acc = LogAccumulator::new();
    for &c in counts {
        let m = &table[c as usize];
        let n0 = m[0][0] * v0 + m[0][1] * v1;
        let n1 = m[1][0] * v0 + m[1][1] * v1;
        let s = n0 + n1;
        if s <= 0.0 || s.is_nan() {
            return ([f64::NAN, f64::NAN], f64::NEG_INFINITY);
        }
        v0 = n0 / s;
        v1 = n1 / s;
        acc.push(s);
    }
    ([v0, v1], acc.total())
}

/// Log-likelihood of `counts` by the rescaled matrix product.
pub fn forward_loglik(counts: &[u32], table: &StepTable, prior: &StatePrior) -> Result<LogLikelihood> {
    if counts.is_empty() {
        return Err(Error::EmptyTrace);
    }
    table.check_covers(counts)?;
    let (_, ll) = forward_raw(counts, table.raw(), prior.as_vector());
    Ok(LogLikelihood(ll))
}

/// Exhaustive sum over all `2^(N+1)` boundary-state paths of
/// `P(s_0) * prod_t factor(c_t, s_{t-1}, s_t)`, returned as a log.
///
/// Exponential in the trace length; refuses `N > BRUTE_FORCE_LIMIT`.
pub fn path_sum_loglik(
    counts: &[u32],
    prior: &StatePrior,
    factor: impl Fn(u32, usize, usize) -> f64,
) -> Result<LogLikelihood> {
    let n = counts.len();
    if n == 0 {
        return Err(Error::EmptyTrace);
    }
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            len: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let start = prior.as_vector();
    let mut total = 0.0;
    for path in 0u64..(1u64 << (n + 1)) {
        let state = |i: usize| ((path >> i) & 1) as usize;
        let mut p = start[state(0)];
        for (t, &c) in counts.iter().enumerate() {
            if p == 0.0 {
                break;
            }
            p *= factor(c, state(t), state(t + 1));
        }
        total += p;
    }
    Ok(LogLikelihood(total.ln()))
}

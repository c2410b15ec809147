//! Posterior probability of the hidden state at every interval boundary
//! for the single-step model, given the whole trace.
//!
//! `P(s_k = a | c)` is the trace likelihood with the step matrix of
//! interval `k` masked to rows `s_k = a`, divided by the full likelihood.
//! The efficient route combines normalized forward and backward vectors;
//! the naive route recomputes the masked product for each `k`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{LogAccumulator, StepMatrix, StepTable};
use crate::kernels::{CountTrace, EmissionRates, InitialState, StatePrior, SwitchProbs};
use crate::posterior::{evaluate_grid, GridSpec, Model, Param};
use crate::single::step_table_single;

/// Cells per block in the grid-averaged state posterior.
const CELL_BLOCK: usize = 32;

/// Boundary-state posteriors for a trace of `N` counts.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePosterior {
    /// `P(s_t = 0)` for `t = 0..=N`.
    pub boundary_off: Vec<f64>,
    /// `P(s_t = 1)` for `t = 0..=N`.
    pub boundary_on: Vec<f64>,
}

impl StatePosterior {
    pub fn len(&self) -> usize {
        self.boundary_on.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Probability that interval `t` (1-based) was on, i.e. that the state
    /// emitting count `c_t` was on. Entry `t-1` holds `P(s_{t-1} = 1)`.
    pub fn p_on(&self) -> &[f64] {
        &self.boundary_on[..self.len()]
    }

    pub fn p_off(&self) -> &[f64] {
        &self.boundary_off[..self.len()]
    }

    /// Posterior of the state at the end of each interval, `s_1..s_N`.
    pub fn end_state_on(&self) -> &[f64] {
        &self.boundary_on[1..]
    }

    /// Most probable state per interval (ties go to off).
    pub fn argmax_states(&self) -> Vec<u8> {
        self.p_on().iter().map(|&p| u8::from(p > 0.5)).collect()
    }
}

/// Splits a step matrix by the row of its next state:
/// `masked[a]` keeps row `s_k = a` and zeroes the other.
pub fn masked_matrices(step: &StepMatrix) -> [StepMatrix; 2] {
    std::array::from_fn(|a| {
        let mut entries = [[0.0; 2]; 2];
        entries[a] = step.entries[a];
        StepMatrix {
            entries,
            log_scale: step.log_scale,
        }
    })
}

/// Boundary-state posterior with known parameters by one forward and one
/// backward pass.
pub fn state_posterior_known(
    trace: &CountTrace,
    probs: &SwitchProbs,
    emissions: &EmissionRates,
    prior: &StatePrior,
) -> Result<StatePosterior> {
    let table = single_table(trace, probs, emissions)?;
    forward_backward(trace.counts(), &table, prior.as_vector())
}

fn single_table(trace: &CountTrace, probs: &SwitchProbs, emissions: &EmissionRates) -> Result<StepTable> {
    if probs.d != 1 {
        return Err(Error::InvalidParameter {
            name: "d",
            value: probs.d as f64,
            reason: "state inference is defined for the single-step model",
        });
    }
    Ok(step_table_single(trace.max_count(), probs, emissions))
}

fn impossible() -> Error {
    Error::InvalidParameter {
        name: "trace",
        value: f64::NAN,
        reason: "the trace has zero probability under these parameters",
    }
}

fn forward_backward(counts: &[u32], table: &StepTable, prior: [f64; 2]) -> Result<StatePosterior> {
    let n = counts.len();
    let m = |t: usize| table.matrix(counts[t - 1]).expect("table covers the trace").entries;
    let mut fwd = vec![[0.0; 2]; n + 1];
    fwd[0] = prior;
    for t in 1..=n {
        let r = m(t);
        let v = fwd[t - 1];
        let next = [r[0][0] * v[0] + r[0][1] * v[1], r[1][0] * v[0] + r[1][1] * v[1]];
        let s = next[0] + next[1];
        if !(s > 0.0) {
            return Err(impossible());
        }
        fwd[t] = [next[0] / s, next[1] / s];
    }
    let mut boundary_off = vec![0.0; n + 1];
    let mut boundary_on = vec![0.0; n + 1];
    let mut back = [1.0, 1.0];
    for t in (0..=n).rev() {
        let (x0, x1) = (fwd[t][0] * back[0], fwd[t][1] * back[1]);
        let s = x0 + x1;
        if !(s > 0.0) {
            return Err(impossible());
        }
        boundary_off[t] = x0 / s;
        boundary_on[t] = x1 / s;
        if t > 0 {
            let r = m(t);
            let prev = [
                back[0] * r[0][0] + back[1] * r[1][0],
                back[0] * r[0][1] + back[1] * r[1][1],
            ];
            let s = prev[0] + prev[1];
            back = [prev[0] / s, prev[1] / s];
        }
    }
    Ok(StatePosterior {
        boundary_off,
        boundary_on,
    })
}

/// `ln([1 1] R_N ... R_k^(a) ... R_1 D_0)`, with the mask on the prior
/// vector when `k = 0`.
pub fn masked_loglik(counts: &[u32], table: &StepTable, prior: [f64; 2], k: usize, a: usize) -> f64 {
    let mut v = prior;
    if k == 0 {
        v[1 - a] = 0.0;
    }
    let mut acc = LogAccumulator::new();
    for (t, &c) in counts.iter().enumerate() {
        let step = table.matrix(c).expect("table covers the trace");
        let r = if t + 1 == k {
            masked_matrices(&step)[a].entries
        } else {
            step.entries
        };
        let next = [r[0][0] * v[0] + r[0][1] * v[1], r[1][0] * v[0] + r[1][1] * v[1]];
        let s = next[0] + next[1];
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        v = [next[0] / s, next[1] / s];
        acc.push(s);
    }
    let s = v[0] + v[1];
    if !(s > 0.0) {
        return f64::NEG_INFINITY;
    }
    acc.push(s);
    acc.total()
}

/// Boundary-state posterior by recomputing the masked product for every
/// `k`. Quadratic in the trace length; used as a reference.
pub fn state_posterior_naive(
    trace: &CountTrace,
    probs: &SwitchProbs,
    emissions: &EmissionRates,
    prior: &StatePrior,
) -> Result<StatePosterior> {
    let table = single_table(trace, probs, emissions)?;
    let counts = trace.counts();
    let p0 = prior.as_vector();
    let n = counts.len();
    let mut boundary_off = vec![0.0; n + 1];
    let mut boundary_on = vec![0.0; n + 1];
    for k in 0..=n {
        let l0 = masked_loglik(counts, &table, p0, k, 0);
        let l1 = masked_loglik(counts, &table, p0, k, 1);
        let top = l0.max(l1);
        if !top.is_finite() {
            return Err(impossible());
        }
        let (x0, x1) = ((l0 - top).exp(), (l1 - top).exp());
        boundary_off[k] = x0 / (x0 + x1);
        boundary_on[k] = x1 / (x0 + x1);
    }
    Ok(StatePosterior {
        boundary_off,
        boundary_on,
    })
}

/// Boundary-state posterior with the single-step parameters marginalized
/// over `grid` under flat priors. The result does not depend on `workers`.
pub fn state_posterior_marginal(
    trace: &CountTrace,
    grid: &GridSpec,
    initial: InitialState,
    workers: usize,
) -> Result<StatePosterior> {
    let posterior = evaluate_grid(trace, &Model::Single, grid, initial, workers)?;
    let cells = grid.cell_values(&[Param::Alpha, Param::Beta, Param::Lambda, Param::Mu]);
    let n = trace.len();
    let mut off = vec![0.0; n + 1];
    let mut on = vec![0.0; n + 1];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidGrid(format!("cannot start worker pool: {e}")))?;

    let weighted: Vec<(usize, f64)> = posterior
        .post
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, w)| w > 0.0)
        .collect();
    for block in weighted.chunks(CELL_BLOCK) {
        let states: Vec<StatePosterior> = pool.install(|| {
            block
                .par_iter()
                .map(|&(cell, _)| {
                    let v = &cells[cell];
                    let probs = SwitchProbs::single(v[0], v[1])?;
                    let emissions = EmissionRates::new(v[3], v[2])?;
                    state_posterior_known(trace, &probs, &emissions, &initial.for_probs(&probs))
                })
                .collect::<Result<_>>()
        })?;
        for (&(_, w), s) in block.iter().zip(&states) {
            for t in 0..=n {
                off[t] += w * s.boundary_off[t];
                on[t] += w * s.boundary_on[t];
            }
        }
    }
    for t in 0..=n {
        let s = off[t] + on[t];
        off[t] /= s;
        on[t] /= s;
    }
    Ok(StatePosterior {
        boundary_off: off,
        boundary_on: on,
    })
}

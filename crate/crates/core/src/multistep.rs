//! Multi-step model: each detector interval is split into `d = 2^m`
//! sub-steps and the emitter may switch only at sub-step boundaries.
//!
//! The joint distribution of (count, end state) given the start state is
//! built for one sub-step from weighted Poissonians and then doubled `m`
//! times. Doubling marginalizes the mid-point state, so each output array
//! is a sum of two discrete convolutions of the half-interval arrays.

use crate::error::{Error, Result};
use crate::forward::{forward_loglik, LogLikelihood, StepTable};
use crate::kernels::{
    check_steps, fill_pmf_table, probs_from_rates, CountTrace, EmissionRates, StatePrior, SwitchProbs, SwitchRates,
};

/// Largest Poisson tail mass dropped by the base-case truncation.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// `f[i][j][k] = P(count = k, end state = j | start state = i)` over an
/// interval of length `interval_fraction`, truncated at `c_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCountDist {
    pub f: [[Vec<f64>; 2]; 2],
    pub interval_fraction: f64,
    pub c_max: usize,
}

impl JointCountDist {
    pub fn get(&self, start: usize, end: usize, count: usize) -> f64 {
        self.f[start][end][count]
    }

    /// Mass retained from start state `i` (1 minus the truncated tail).
    pub fn retained_mass(&self, start: usize) -> f64 {
        self.f[start].iter().map(|row| row.iter().sum::<f64>()).sum()
    }

    /// Largest probability mass lost to truncation over both start states.
    pub fn tail_bound(&self) -> f64 {
        (0..2)
            .map(|i| (1.0 - self.retained_mass(i)).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Step table for counts `0..=max_count` (requires `max_count <= c_max`).
    pub fn step_table(&self, max_count: u32) -> Result<StepTable> {
        if max_count as usize > self.c_max {
            return Err(Error::CountBeyondTruncation {
                count: max_count,
                c_max: self.c_max,
            });
        }
        Ok(StepTable::build(max_count, |c| {
            let c = c as usize;
            [[self.f[0][0][c], self.f[1][0][c]], [self.f[0][1][c], self.f[1][1][c]]]
        }))
    }
}

/// Default truncation: the larger of the maximum observed count and the
/// on-state mean, plus ten on-state standard deviations plus 20, at least 40.
pub fn default_c_max(max_count: u32, emissions: &EmissionRates) -> usize {
    let on = emissions.on_rate();
    let centre = (max_count as f64).max(on);
    ((centre + 10.0 * on.sqrt() + 20.0).ceil() as usize).max(40)
}

/// Smallest `d = 2^m` with `r_alpha r_beta < 0.1 * d^2` for the given
/// largest rate product.
pub fn auto_select_d(max_rate_product: f64) -> u32 {
    let mut d: u32 = 1;
    while max_rate_product >= 0.1 * (d as f64) * (d as f64) && d < (1 << 16) {
        d <<= 1;
    }
    d
}

/// Sub-step distributions at `t = 1/d`:
/// `f_00 = (1 - alpha_d) P(mu/d)`, `f_01 = alpha_d P(mu/d)`,
/// `f_10 = beta_d P((mu+lambda)/d)`, `f_11 = (1 - beta_d) P((mu+lambda)/d)`.
pub fn base_distributions(
    d: u32,
    probs: &SwitchProbs,
    emissions: &EmissionRates,
    c_max: usize,
) -> Result<JointCountDist> {
    check_steps(d)?;
    if probs.d != d {
        return Err(Error::InvalidParameter {
            name: "d",
            value: probs.d as f64,
            reason: "switching probabilities were built for a different step count",
        });
    }
    let step = 1.0 / d as f64;
    let mut off = vec![0.0; c_max + 1];
    let mut on = vec![0.0; c_max + 1];
    fill_pmf_table(emissions.mu * step, &mut off);
    fill_pmf_table(emissions.on_rate() * step, &mut on);

    let tail = (1.0 - on.iter().sum::<f64>()).max(0.0);
    if tail >= TAIL_TOLERANCE {
        return Err(Error::InsufficientTruncation {
            c_max,
            required: required_c_max(emissions.on_rate() * step),
            tail,
        });
    }

    let scaled = |p: &[f64], w: f64| p.iter().map(|&x| w * x).collect::<Vec<_>>();
    Ok(JointCountDist {
        f: [
            [scaled(&off, 1.0 - probs.alpha), scaled(&off, probs.alpha)],
            [scaled(&on, probs.beta), scaled(&on, 1.0 - probs.beta)],
        ],
        interval_fraction: step,
        c_max,
    })
}

fn required_c_max(rate: f64) -> usize {
    let mut p = (-rate).exp();
    let mut cdf = p;
    let mut c = 0usize;
    while 1.0 - cdf >= TAIL_TOLERANCE && c < 1_000_000 {
        c += 1;
        p *= rate / c as f64;
        cdf += p;
    }
    c
}

/// One doubling step: `f_ij(2t, k) = sum_m [f_i0(t, m) f_0j(t, k-m) + f_i1(t, m) f_1j(t, k-m)]`.
pub fn convolve_halving(half: &JointCountDist) -> JointCountDist {
    let n = half.c_max + 1;
    let f = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let mut out = vec![0.0; n];
            for mid in 0..2 {
                let left = &half.f[i][mid];
                let right = &half.f[mid][j];
                for (m, &l) in left.iter().enumerate() {
                    if l == 0.0 {
                        continue;
                    }
                    for (o, &r) in out[m..].iter_mut().zip(right) {
                        *o += l * r;
                    }
                }
            }
            out
        })
    });
    JointCountDist {
        f,
        interval_fraction: 2.0 * half.interval_fraction,
        c_max: half.c_max,
    }
}

/// Full-interval distributions for `d` sub-steps: rates are mapped to
/// per-step probabilities, the base case is built, and `log2 d` doublings
/// are applied.
pub fn interval_distributions(
    d: u32,
    rates: &SwitchRates,
    emissions: &EmissionRates,
    c_max: usize,
) -> Result<JointCountDist> {
    let probs = probs_from_rates(rates, d)?;
    let mut dist = base_distributions(d, &probs, emissions, c_max)?;
    for _ in 0..d.trailing_zeros() {
        dist = convolve_halving(&dist);
    }
    Ok(dist)
}

/// Step table for the multi-step model covering counts up to `max_count`.
pub fn multistep_step_table(
    max_count: u32,
    d: u32,
    rates: &SwitchRates,
    emissions: &EmissionRates,
) -> Result<StepTable> {
    let c_max = default_c_max(max_count, emissions);
    interval_distributions(d, rates, emissions, c_max)?.step_table(max_count)
}

/// `ln P(counts | r_alpha, r_beta, lambda, mu)` for the `d`-step model.
pub fn trace_loglik_multistep(
    trace: &CountTrace,
    rates: &SwitchRates,
    emissions: &EmissionRates,
    prior: &StatePrior,
    d: u32,
) -> Result<LogLikelihood> {
    let table = multistep_step_table(trace.max_count(), d, rates, emissions)?;
    forward_loglik(trace.counts(), &table, prior)
}

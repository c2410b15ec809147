//! Seeded generators for count traces under the three generative models.
//!
//! All generators draw from a ChaCha8 stream seeded with the caller's
//! seed. The draw order is part of the output contract: initial state,
//! then for each interval the per-step counts and transitions (step models)
//! or the waiting times followed by the interval count (continuous model).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{check_steps, CountTrace, EmissionRates, InitialState, SwitchProbs, SwitchRates};

/// Identifier of the random stream; bump when the draw order changes.
pub const RNG_ALGORITHM: &str = "chacha8-v1";

/// A simulated trace together with its hidden ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trace: CountTrace,
    /// Hidden state at each interval boundary `t = 0..=N`.
    pub boundary_states: Vec<u8>,
    /// Fraction of each interval spent on.
    pub on_fractions: Vec<f64>,
    pub seed: u64,
    /// Switch times in interval units; only recorded on request.
    pub switch_times: Option<Vec<f64>>,
}

impl SimResult {
    /// State held at the start of interval `t` (0-based), `s_t`.
    pub fn start_state(&self, t: usize) -> u8 {
        self.boundary_states[t]
    }

    /// Number of boundary-to-boundary state changes (a lower bound on the
    /// number of switch events for the continuous model).
    pub fn boundary_changes(&self) -> usize {
        self.boundary_states.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_len(n_intervals: usize) -> Result<()> {
    if n_intervals == 0 {
        Err(Error::EmptyTrace)
    } else {
        Ok(())
    }
}

fn draw_initial(rng: &mut ChaCha8Rng, p_on: f64) -> usize {
    usize::from(rng.random::<f64>() < p_on)
}

/// Poisson sampler that accepts a zero rate.
struct CountSampler(Option<Poisson<f64>>);

impl CountSampler {
    fn new(rate: f64) -> Self {
        Self(if rate > 0.0 { Poisson::new(rate).ok() } else { None })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        match &self.0 {
            Some(p) => p.sample(rng) as u32,
            None => 0,
        }
    }
}

/// Single-step model: the state is fixed over each interval and may
/// switch only at interval boundaries.
pub fn sim_dtmc_single(
    probs: &SwitchProbs,
    emissions: &EmissionRates,
    n_intervals: usize,
    initial: InitialState,
    seed: u64,
) -> Result<SimResult> {
    if probs.d != 1 {
        return Err(Error::InvalidParameter {
            name: "d",
            value: probs.d as f64,
            reason: "single-step simulation requires d = 1",
        });
    }
    sim_dtmc_multi(probs, emissions, n_intervals, initial, seed)
}

/// Multi-step model: `d` sub-steps per interval, each contributing a
/// Poisson count at rate `mu/d` or `(mu+lambda)/d` according to its state.
pub fn sim_dtmc_multi(
    probs: &SwitchProbs,
    emissions: &EmissionRates,
    n_intervals: usize,
    initial: InitialState,
    seed: u64,
) -> Result<SimResult> {
    check_len(n_intervals)?;
    check_steps(probs.d)?;
    let d = probs.d as usize;
    let mut rng = rng_for(seed);
    let samplers = [
        CountSampler::new(emissions.mu / d as f64),
        CountSampler::new(emissions.on_rate() / d as f64),
    ];
    let switch_prob = [probs.alpha, probs.beta];

    let mut state = draw_initial(&mut rng, initial.for_probs(probs).p_on);
    let mut counts = Vec::with_capacity(n_intervals);
    let mut boundary_states = Vec::with_capacity(n_intervals + 1);
    let mut on_fractions = Vec::with_capacity(n_intervals);
    boundary_states.push(state as u8);
    for _ in 0..n_intervals {
        let mut count = 0u32;
        let mut on_steps = 0usize;
        for _ in 0..d {
            count += samplers[state].sample(&mut rng);
            on_steps += state;
            if rng.random::<f64>() < switch_prob[state] {
                state ^= 1;
            }
        }
        counts.push(count);
        on_fractions.push(on_steps as f64 / d as f64);
        boundary_states.push(state as u8);
    }
    Ok(SimResult {
        trace: CountTrace::new(counts)?,
        boundary_states,
        on_fractions,
        seed,
        switch_times: None,
    })
}

/// Continuous-time model with exponential sojourn times.
pub fn sim_ctmc(
    rates: &SwitchRates,
    emissions: &EmissionRates,
    n_intervals: usize,
    initial: InitialState,
    seed: u64,
) -> Result<SimResult> {
    ctmc_inner(rates, emissions, n_intervals, initial, seed, false)
}

/// As [`sim_ctmc`], additionally recording every switch time.
pub fn sim_ctmc_with_path(
    rates: &SwitchRates,
    emissions: &EmissionRates,
    n_intervals: usize,
    initial: InitialState,
    seed: u64,
) -> Result<SimResult> {
    ctmc_inner(rates, emissions, n_intervals, initial, seed, true)
}

fn ctmc_inner(
    rates: &SwitchRates,
    emissions: &EmissionRates,
    n_intervals: usize,
    initial: InitialState,
    seed: u64,
    record: bool,
) -> Result<SimResult> {
    check_len(n_intervals)?;
    let mut rng = rng_for(seed);
    let leave = [
        Exp::new(rates.r_alpha).map_err(|_| bad_rate("r_alpha", rates.r_alpha))?,
        Exp::new(rates.r_beta).map_err(|_| bad_rate("r_beta", rates.r_beta))?,
    ];
    let mut state = draw_initial(&mut rng, initial.for_rates(rates).p_on);
    // Exp with rate 0 yields +inf: the chain never leaves that state.
    let mut remaining: f64 = leave[state].sample(&mut rng);
    let mut switch_times = record.then(Vec::new);

    let mut counts = Vec::with_capacity(n_intervals);
    let mut boundary_states = Vec::with_capacity(n_intervals + 1);
    let mut on_fractions = Vec::with_capacity(n_intervals);
    boundary_states.push(state as u8);
    for n in 0..n_intervals {
        let mut elapsed = 0.0;
        let mut on_time = 0.0;
        loop {
            let left = 1.0 - elapsed;
            if remaining >= left {
                if state == 1 {
                    on_time += left;
                }
                remaining -= left;
                break;
            }
            if state == 1 {
                on_time += remaining;
            }
            elapsed += remaining;
            state ^= 1;
            if let Some(times) = switch_times.as_mut() {
                times.push(n as f64 + elapsed);
            }
            remaining = leave[state].sample(&mut rng);
        }
        let fraction = on_time.clamp(0.0, 1.0);
        counts.push(CountSampler::new(emissions.mu + fraction * emissions.lambda).sample(&mut rng));
        on_fractions.push(fraction);
        boundary_states.push(state as u8);
    }
    Ok(SimResult {
        trace: CountTrace::new(counts)?,
        boundary_states,
        on_fractions,
        seed,
        switch_times,
    })
}

fn bad_rate(name: &'static str, value: f64) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason: "must be finite and non-negative",
    }
}

//! Domain types shared by every likelihood backend, the Poisson emission
//! law, and the mapping between continuous switching rates and per-step
//! switching probabilities.
//!
//! Time is measured in detector intervals throughout: an emission rate is
//! the expected number of counts per interval and a switching rate is the
//! expected number of switch events per interval spent in the source state.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Photon counts, one per detector interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTrace {
    counts: Vec<u32>,
}

impl CountTrace {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyTrace);
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    /// Always false; a trace holds at least one interval.
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        self.counts.iter().map(|&c| c as f64).sum::<f64>() / self.len() as f64
    }
}

/// Background rate `mu` and additional fluorescence rate `lambda`, both in
/// expected counts per detector interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionRates {
    pub mu: f64,
    pub lambda: f64,
}

impl EmissionRates {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        check_non_negative("mu", mu)?;
        check_non_negative("lambda", lambda)?;
        Ok(Self { mu, lambda })
    }

    /// Count rate while the emitter is on.
    pub fn on_rate(&self) -> f64 {
        self.mu + self.lambda
    }

    /// Count rate for state `s` (0 = off, 1 = on).
    pub fn rate_for(&self, state: usize) -> f64 {
        if state == 0 {
            self.mu
        } else {
            self.mu + self.lambda
        }
    }
}

/// Per-step switching probabilities with `d` steps per detector interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchProbs {
    /// Probability of switching on (off -> on) at a step boundary.
    pub alpha: f64,
    /// Probability of switching off (on -> off) at a step boundary.
    pub beta: f64,
    pub d: u32,
}

impl SwitchProbs {
    pub fn new(alpha: f64, beta: f64, d: u32) -> Result<Self> {
        check_unit("alpha", alpha)?;
        check_unit("beta", beta)?;
        check_steps(d)?;
        Ok(Self { alpha, beta, d })
    }

    /// Single-step probabilities (`d = 1`).
    pub fn single(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 1)
    }

    /// Transition probability `P(next = to | current = from)`.
    #[inline]
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        match (from, to) {
            (0, 0) => 1.0 - self.alpha,
            (0, _) => self.alpha,
            (_, 0) => self.beta,
            _ => 1.0 - self.beta,
        }
    }
}

/// Continuous-time switching rates per detector interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchRates {
    /// Switch-on rate: rate of leaving the off state.
    pub r_alpha: f64,
    /// Switch-off rate: rate of leaving the on state.
    pub r_beta: f64,
}

impl SwitchRates {
    pub fn new(r_alpha: f64, r_beta: f64) -> Result<Self> {
        check_non_negative("r_alpha", r_alpha)?;
        check_non_negative("r_beta", r_beta)?;
        Ok(Self { r_alpha, r_beta })
    }

    pub fn total(&self) -> f64 {
        self.r_alpha + self.r_beta
    }
}

/// Distribution of the hidden state at the start of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePrior {
    pub p_off: f64,
    pub p_on: f64,
}

impl StatePrior {
    pub fn new(p_off: f64, p_on: f64) -> Result<Self> {
        check_unit("p_off", p_off)?;
        check_unit("p_on", p_on)?;
        if (p_off + p_on - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "p_off + p_on",
                value: p_off + p_on,
                reason: "must sum to 1",
            });
        }
        Ok(Self { p_off, p_on })
    }

    pub fn off() -> Self {
        Self { p_off: 1.0, p_on: 0.0 }
    }

    pub fn on() -> Self {
        Self { p_off: 0.0, p_on: 1.0 }
    }

    pub fn uniform() -> Self {
        Self { p_off: 0.5, p_on: 0.5 }
    }

    /// Stationary distribution of the step chain; uniform when neither
    /// transition is possible.
    pub fn stationary_probs(probs: &SwitchProbs) -> Self {
        Self::stationary(probs.alpha, probs.beta)
    }

    /// Stationary distribution of the continuous-time chain.
    pub fn stationary_rates(rates: &SwitchRates) -> Self {
        Self::stationary(rates.r_alpha, rates.r_beta)
    }

    fn stationary(on: f64, off: f64) -> Self {
        let total = on + off;
        if total <= 0.0 {
            Self::uniform()
        } else {
            Self {
                p_off: off / total,
                p_on: on / total,
            }
        }
    }

    pub fn as_vector(&self) -> [f64; 2] {
        [self.p_off, self.p_on]
    }
}

/// How the initial state distribution is chosen when it is not given
/// explicitly for every parameter cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum InitialState {
    /// Stationary distribution of the chain at the evaluated parameters.
    #[default]
    Stationary,
    Fixed(StatePrior),
}

impl InitialState {
    pub fn for_probs(&self, probs: &SwitchProbs) -> StatePrior {
        match self {
            InitialState::Stationary => StatePrior::stationary_probs(probs),
            InitialState::Fixed(p) => *p,
        }
    }

    pub fn for_rates(&self, rates: &SwitchRates) -> StatePrior {
        match self {
            InitialState::Stationary => StatePrior::stationary_rates(rates),
            InitialState::Fixed(p) => *p,
        }
    }
}

/// Poisson probability of `count` events at mean `rate`.
///
/// `rate = 0` is allowed: the pmf is then 1 at zero counts and 0 elsewhere.
pub fn poisson_pmf(rate: f64, count: u32) -> Result<f64> {
    check_non_negative("rate", rate)?;
    Ok(pmf(rate, count))
}

/// Natural log of [`poisson_pmf`]; negative infinity when the count is
/// impossible (`rate = 0`, `count > 0`).
pub fn log_poisson_pmf(rate: f64, count: u32) -> Result<f64> {
    check_non_negative("rate", rate)?;
    Ok(log_pmf(rate, count))
}

#[inline]
pub(crate) fn log_pmf(rate: f64, count: u32) -> f64 {
    if rate == 0.0 {
        return if count == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let c = count as f64;
    c * rate.ln() - rate - ln_factorial(count)
}

#[inline]
pub(crate) fn pmf(rate: f64, count: u32) -> f64 {
    log_pmf(rate, count).exp()
}

pub(crate) fn ln_factorial(n: u32) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Fills `out[c]` with the Poisson pmf at `rate` for `c = 0..out.len()`.
///
/// Uses the ratio recurrence `p(c) = p(c-1) * rate / c`, falling back to the
/// log form where `exp(-rate)` would underflow.
pub(crate) fn fill_pmf_table(rate: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if rate > 600.0 {
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = pmf(rate, c as u32);
        }
        return;
    }
    let mut p = (-rate).exp();
    out[0] = p;
    for (c, slot) in out.iter_mut().enumerate().skip(1) {
        p *= rate / c as f64;
        *slot = p;
    }
}

/// Per-step switching probabilities for `d` steps per interval:
/// `alpha_d = 1 - exp(-r_alpha / d)` and likewise for `beta_d`.
pub fn probs_from_rates(rates: &SwitchRates, d: u32) -> Result<SwitchProbs> {
    check_steps(d)?;
    let step = 1.0 / d as f64;
    Ok(SwitchProbs {
        alpha: -(-rates.r_alpha * step).exp_m1(),
        beta: -(-rates.r_beta * step).exp_m1(),
        d,
    })
}

/// Inverse of [`probs_from_rates`]: `r = -d ln(1 - p)`. Infinite for `p = 1`.
pub fn rates_from_probs(probs: &SwitchProbs) -> SwitchRates {
    let d = probs.d as f64;
    SwitchRates {
        r_alpha: -d * (-probs.alpha).ln_1p(),
        r_beta: -d * (-probs.beta).ln_1p(),
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and non-negative",
        })
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

pub(crate) fn check_steps(d: u32) -> Result<()> {
    if d >= 1 && d.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo(d))
    }
}

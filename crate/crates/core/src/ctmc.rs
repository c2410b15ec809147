//! Continuous-time model: the emitter may switch any number of times
//! inside a detector interval.
//!
//! Conditioning on the boundary states `s_{n-1} = a`, `s_n = b`, the time
//! spent on during the interval is a fraction `f` with joint density
//! `R_ab(f)`. The count is Poisson with rate `mu + f lambda`, so each step
//! matrix entry is the integral of that Poisson pmf against `R_ab`.
//! Zero-switch histories put point masses at `f = 0` (a = b = 0) and `f = 1`
//! (a = b = 1); these are added analytically and never pass through the
//! quadrature.

use crate::bessel::{series_i0, series_i1};
use crate::error::{Error, Result};
use crate::forward::{forward_loglik, LogLikelihood, StepTable};
use crate::kernels::{fill_pmf_table, pmf, CountTrace, EmissionRates, StatePrior, SwitchRates};
use crate::quadrature::{QuadratureSpec, UnitRule};

/// `P(s(t) = b | s(0) = a)` for the two-state chain.
pub fn transition_prob(a: usize, b: usize, t: f64, rates: &SwitchRates) -> f64 {
    let total = rates.total();
    if total == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    // 1 - exp(-total t), accurate for small arguments.
    let relaxed = -(-total * t).exp_m1();
    let (ra, rb) = (rates.r_alpha, rates.r_beta);
    match (a, b) {
        (0, 0) => 1.0 - ra / total * relaxed,
        (0, _) => ra / total * relaxed,
        (_, 0) => rb / total * relaxed,
        _ => 1.0 - rb / total * relaxed,
    }
}

/// Joint density of ending in state `b` with on-fraction `f`, given a start
/// in state `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionDensity {
    pub a: usize,
    pub b: usize,
    pub rates: SwitchRates,
    /// Weight of the point mass at `f = 0` (only for `a = b = 0`).
    pub delta_at_0: f64,
    /// Weight of the point mass at `f = 1` (only for `a = b = 1`).
    pub delta_at_1: f64,
}

impl FractionDensity {
    /// Smooth part of the density at `f` in `(0, 1)`.
    pub fn smooth(&self, f: f64) -> f64 {
        smooth_density(self.a, self.b, f, &self.rates)
    }

    /// Total probability carried by this `(a, b)` pair.
    pub fn total_mass(&self, rule: &UnitRule) -> f64 {
        self.delta_at_0 + self.delta_at_1 + rule.integrate(|f| self.smooth(f))
    }
}

pub fn fraction_density(a: usize, b: usize, rates: &SwitchRates) -> FractionDensity {
    FractionDensity {
        a,
        b,
        rates: *rates,
        delta_at_0: if a == 0 && b == 0 { (-rates.r_alpha).exp() } else { 0.0 },
        delta_at_1: if a == 1 && b == 1 { (-rates.r_beta).exp() } else { 0.0 },
    }
}

/// Smooth density summed over all histories with at least one switch.
///
/// With `y = f (1 - f) r_alpha r_beta` and the sojourn weight
/// `E = exp(-r_alpha (1 - f) - r_beta f)`:
///
/// * `R_00 = E (1 - f) r_alpha r_beta S_1(y)`
/// * `R_01 = E r_alpha S_0(y)`
/// * `R_10 = E r_beta S_0(y)`
/// * `R_11 = E f r_alpha r_beta S_1(y)`
///
/// where `S_0(y) = I_0(2 sqrt y)` and `S_1(y) = I_1(2 sqrt y) / sqrt y`.
pub fn smooth_density(a: usize, b: usize, f: f64, rates: &SwitchRates) -> f64 {
    let (ra, rb) = (rates.r_alpha, rates.r_beta);
    let sojourn = (-ra * (1.0 - f) - rb * f).exp();
    let product = ra * rb;
    let y = f * (1.0 - f) * product;
    match (a, b) {
        (0, 0) => {
            if product == 0.0 {
                0.0
            } else {
                sojourn * (1.0 - f) * product * series_i1(y)
            }
        }
        (0, _) => sojourn * ra * series_i0(y),
        (_, 0) => sojourn * rb * series_i0(y),
        _ => {
            if product == 0.0 {
                0.0
            } else {
                sojourn * f * product * series_i1(y)
            }
        }
    }
}

/// Fraction densities at the quadrature nodes, premultiplied by the
/// weights, for one pair of switching rates. Shared read-only by every
/// emission-rate cell evaluated at these rates.
#[derive(Debug, Clone)]
pub struct FractionTable {
    pub rates: SwitchRates,
    nodes: Vec<f64>,
    /// `weighted[b][a][i] = w_i R_ab(f_i)`.
    weighted: [[Vec<f64>; 2]; 2],
    delta_off: f64,
    delta_on: f64,
}

impl FractionTable {
    pub fn new(rates: &SwitchRates, rule: &UnitRule) -> Self {
        let weighted = std::array::from_fn(|b| {
            std::array::from_fn(|a| {
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&f, &w)| w * smooth_density(a, b, f, rates))
                    .collect()
            })
        });
        Self {
            rates: *rates,
            nodes: rule.nodes.clone(),
            weighted,
            delta_off: (-rates.r_alpha).exp(),
            delta_on: (-rates.r_beta).exp(),
        }
    }

    /// Step matrices `P(c, s_n = b | s_{n-1} = a)` for `c = 0..=max_count`.
    pub fn step_table(&self, max_count: u32, emissions: &EmissionRates) -> StepTable {
        let n = max_count as usize + 1;
        let mut entries = vec![[[0.0f64; 2]; 2]; n];
        let mut pmfs = vec![0.0; n];
        for (i, &f) in self.nodes.iter().enumerate() {
            fill_pmf_table(emissions.mu + f * emissions.lambda, &mut pmfs);
            let w00 = self.weighted[0][0][i];
            let w01 = self.weighted[0][1][i];
            let w10 = self.weighted[1][0][i];
            let w11 = self.weighted[1][1][i];
            for (e, &p) in entries.iter_mut().zip(&pmfs) {
                e[0][0] += w00 * p;
                e[0][1] += w01 * p;
                e[1][0] += w10 * p;
                e[1][1] += w11 * p;
            }
        }
        fill_pmf_table(emissions.mu, &mut pmfs);
        for (e, &p) in entries.iter_mut().zip(&pmfs) {
            e[0][0] += self.delta_off * p;
        }
        fill_pmf_table(emissions.on_rate(), &mut pmfs);
        for (e, &p) in entries.iter_mut().zip(&pmfs) {
            e[1][1] += self.delta_on * p;
        }
        StepTable::from_entries(entries)
    }
}

/// Builds step tables at `quad` and at twice its node count and fails if
/// any entry moves by more than the configured relative tolerance.
pub fn verify_quadrature(
    rates: &SwitchRates,
    emissions: &EmissionRates,
    max_count: u32,
    quad: &QuadratureSpec,
) -> Result<()> {
    quad.validate()?;
    let coarse = FractionTable::new(rates, &quad.rule()).step_table(max_count, emissions);
    let fine = FractionTable::new(rates, &quad.refined().rule()).step_table(max_count, emissions);
    for c in 0..=max_count {
        let (x, y) = (coarse.matrix(c).unwrap(), fine.matrix(c).unwrap());
        for b in 0..2 {
            for a in 0..2 {
                let (u, v) = (x.get(b, a), y.get(b, a));
                let scale = u.abs().max(v.abs());
                if scale < 1e-250 {
                    continue;
                }
                let change = (u - v).abs() / scale;
                if change > quad.tolerance {
                    return Err(Error::QuadratureNotConverged {
                        nodes: quad.nodes,
                        count: c,
                        change,
                        tolerance: quad.tolerance,
                    });
                }
            }
        }
    }
    Ok(())
}

/// `P(c, s_n = b | s_{n-1} = a)` for a single count, with a refinement
/// check against a doubled node count.
pub fn count_state_prob_ctmc(
    count: u32,
    a: usize,
    b: usize,
    rates: &SwitchRates,
    emissions: &EmissionRates,
    quad: &QuadratureSpec,
) -> Result<f64> {
    quad.validate()?;
    let eval = |spec: &QuadratureSpec| {
        let rule = spec.rule();
        let density = fraction_density(a, b, rates);
        let smooth = rule.integrate(|f| pmf(emissions.mu + f * emissions.lambda, count) * density.smooth(f));
        smooth + density.delta_at_0 * pmf(emissions.mu, count) + density.delta_at_1 * pmf(emissions.on_rate(), count)
    };
    let value = eval(quad);
    let refined = eval(&quad.refined());
    let scale = value.abs().max(refined.abs());
    if scale > 1e-250 {
        let change = (value - refined).abs() / scale;
        if change > quad.tolerance {
            return Err(Error::QuadratureNotConverged {
                nodes: quad.nodes,
                count,
                change,
                tolerance: quad.tolerance,
            });
        }
    }
    Ok(value)
}

/// Step table for the continuous-time model at one parameter point.
pub fn ctmc_step_table(
    max_count: u32,
    rates: &SwitchRates,
    emissions: &EmissionRates,
    quad: &QuadratureSpec,
) -> Result<StepTable> {
    quad.validate()?;
    Ok(FractionTable::new(rates, &quad.rule()).step_table(max_count, emissions))
}

/// `ln P(counts | r_alpha, r_beta, lambda, mu)` for the continuous-time model.
pub fn trace_loglik_ctmc(
    trace: &CountTrace,
    rates: &SwitchRates,
    emissions: &EmissionRates,
    prior: &StatePrior,
    quad: &QuadratureSpec,
) -> Result<LogLikelihood> {
    let table = ctmc_step_table(trace.max_count(), rates, emissions, quad)?;
    forward_loglik(trace.counts(), &table, prior)
}

/// Probability of `count` averaged uniformly over the on-fraction:
/// `int_0^1 Poisson(mu + f lambda; count) df`.
pub fn avg_count_prob(count: u32, emissions: &EmissionRates) -> f64 {
    if emissions.lambda == 0.0 {
        return pmf(emissions.mu, count);
    }
    UnitRule::gauss_legendre(64).integrate(|f| pmf(emissions.mu + f * emissions.lambda, count))
}

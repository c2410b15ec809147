//! Single-step model: the emitter holds one state for a whole detector
//! interval and may switch only at interval boundaries. The count in
//! interval `t` is Poisson with rate `mu` or `mu + lambda` depending on the
//! state `s_{t-1}` held during that interval.

use crate::error::{Error, Result};
use crate::forward::{forward_loglik, path_sum_loglik, LogLikelihood, StepMatrix, StepTable};
use crate::kernels::{fill_pmf_table, pmf, CountTrace, EmissionRates, StatePrior, SwitchProbs};

/// Step matrix for one observed count: entry `(b, a)` is
/// `P(c | s_{t-1} = a) * P(s_t = b | s_{t-1} = a)`.
pub fn step_matrix_single(count: u32, probs: &SwitchProbs, emissions: &EmissionRates) -> StepMatrix {
    let p_off = pmf(emissions.mu, count);
    let p_on = pmf(emissions.on_rate(), count);
    StepMatrix::new(entries(p_off, p_on, probs))
}

#[inline]
fn entries(p_off: f64, p_on: f64, probs: &SwitchProbs) -> [[f64; 2]; 2] {
    [
        [p_off * (1.0 - probs.alpha), p_on * probs.beta],
        [p_off * probs.alpha, p_on * (1.0 - probs.beta)],
    ]
}

/// Step matrices for every count up to `max_count`.
pub fn step_table_single(max_count: u32, probs: &SwitchProbs, emissions: &EmissionRates) -> StepTable {
    let n = max_count as usize + 1;
    let mut off = vec![0.0; n];
    let mut on = vec![0.0; n];
    fill_pmf_table(emissions.mu, &mut off);
    fill_pmf_table(emissions.on_rate(), &mut on);
    StepTable::build(max_count, |c| entries(off[c as usize], on[c as usize], probs))
}

fn check_single(probs: &SwitchProbs) -> Result<()> {
    if probs.d != 1 {
        return Err(Error::InvalidParameter {
            name: "d",
            value: probs.d as f64,
            reason: "single-step model requires d = 1",
        });
    }
    Ok(())
}

/// `ln P(counts | alpha_1, beta_1, lambda, mu)` by the rescaled matrix product.
pub fn trace_loglik_single(
    trace: &CountTrace,
    probs: &SwitchProbs,
    emissions: &EmissionRates,
    prior: &StatePrior,
) -> Result<LogLikelihood> {
    check_single(probs)?;
    let table = step_table_single(trace.max_count(), probs, emissions);
    forward_loglik(trace.counts(), &table, prior)
}

/// Exact sum over every hidden state path. Exponential cost; only for
/// traces of at most [`crate::forward::BRUTE_FORCE_LIMIT`] intervals.
pub fn brute_force_loglik(
    trace: &CountTrace,
    probs: &SwitchProbs,
    emissions: &EmissionRates,
    prior: &StatePrior,
) -> Result<LogLikelihood> {
    check_single(probs)?;
    path_sum_loglik(trace.counts(), prior, |c, a, b| {
        pmf(emissions.rate_for(a), c) * probs.transition(a, b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::poisson_pmf;
    use proptest::prelude::*;

    fn em(mu: f64, lambda: f64) -> EmissionRates {
        EmissionRates::new(mu, lambda).unwrap()
    }

    #[test]
    fn no_switching_gives_diagonal() {
        let probs = SwitchProbs::single(0.0, 0.0).unwrap();
        let m = step_matrix_single(4, &probs, &em(2.0, 20.0));
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(0, 0), poisson_pmf(2.0, 4).unwrap());
        assert_eq!(m.get(1, 1), poisson_pmf(22.0, 4).unwrap());
    }

    #[test]
    fn hand_entry() {
        let probs = SwitchProbs::single(0.3, 0.2).unwrap();
        let m = step_matrix_single(5, &probs, &em(2.0, 20.0));
        let expected = 32.0 * (-2.0f64).exp() / 120.0 * 0.3;
        assert!((m.get(1, 0) - expected).abs() < 1e-15);
        for a in 0..2 {
            let rate = if a == 0 { 2.0 } else { 22.0 };
            let col = m.column_sum(a);
            assert!((col - poisson_pmf(rate, 5).unwrap()).abs() < 1e-16);
        }
    }

    #[test]
    fn single_interval_equals_four_term_sum() {
        let probs = SwitchProbs::single(0.37, 0.61).unwrap();
        let e = em(1.5, 7.0);
        let prior = StatePrior::new(0.25, 0.75).unwrap();
        let c = 6;
        let mut expected = 0.0;
        for s0 in 0..2 {
            for s1 in 0..2 {
                let rate = if s0 == 0 { 1.5 } else { 8.5 };
                expected += prior.as_vector()[s0] * probs.transition(s0, s1) * poisson_pmf(rate, c).unwrap();
            }
        }
        let trace = CountTrace::new(vec![c]).unwrap();
        let ll = trace_loglik_single(&trace, &probs, &e, &prior).unwrap();
        assert!((ll.value() - expected.ln()).abs() < 1e-14);
        let bf = brute_force_loglik(&trace, &probs, &e, &prior).unwrap();
        assert!((bf.value() - expected.ln()).abs() < 1e-14);
    }

    #[test]
    fn frozen_off_state() {
        let probs = SwitchProbs::single(0.0, 0.0).unwrap();
        let counts = vec![1, 0, 3, 2, 5, 2];
        let trace = CountTrace::new(counts.clone()).unwrap();
        let ll = trace_loglik_single(&trace, &probs, &em(2.0, 10.0), &StatePrior::off()).unwrap();
        let expected: f64 = counts.iter().map(|&c| poisson_pmf(2.0, c).unwrap().ln()).sum();
        assert!((ll.value() - expected).abs() < 1e-12);
    }

    #[test]
    fn forced_alternation_from_off() {
        // With alpha = 1 from a surely-off start, only paths 0,1,... contribute.
        let probs = SwitchProbs::single(1.0, 1.0).unwrap();
        let e = em(1.0, 9.0);
        let trace = CountTrace::new(vec![0, 12, 1, 9]).unwrap();
        let bf = brute_force_loglik(&trace, &probs, &e, &StatePrior::off()).unwrap();
        let expected: f64 = [(1.0, 0), (10.0, 12), (1.0, 1), (10.0, 9)]
            .iter()
            .map(|&(r, c)| poisson_pmf(r, c).unwrap().ln())
            .sum();
        assert!((bf.value() - expected).abs() < 1e-12);
    }

    #[test]
    fn impossible_counts() {
        let probs = SwitchProbs::single(0.2, 0.2).unwrap();
        let trace = CountTrace::new(vec![0, 2]).unwrap();
        let ll = trace_loglik_single(&trace, &probs, &em(0.0, 0.0), &StatePrior::uniform()).unwrap();
        assert!(ll.is_impossible());
    }

    #[test]
    fn rejects_multistep_probs() {
        let probs = SwitchProbs::new(0.1, 0.1, 4).unwrap();
        let trace = CountTrace::new(vec![1]).unwrap();
        assert!(trace_loglik_single(&trace, &probs, &em(1.0, 1.0), &StatePrior::uniform()).is_err());
    }

    #[test]
    fn likelihood_normalizes_over_data() {
        let probs = SwitchProbs::single(0.3, 0.45).unwrap();
        let e = em(2.0, 5.0);
        let prior = StatePrior::new(0.4, 0.6).unwrap();
        let mut total = 0.0;
        for c1 in 0..=30 {
            for c2 in 0..=30 {
                let trace = CountTrace::new(vec![c1, c2]).unwrap();
                total += trace_loglik_single(&trace, &probs, &e, &prior).unwrap().value().exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn matches_brute_force(
            counts in prop::collection::vec(0u32..30, 1..=12),
            alpha in 0.0f64..=1.0,
            beta in 0.0f64..=1.0,
            mu in 0.05f64..10.0,
            lambda in 0.0f64..25.0,
            p_on in 0.0f64..=1.0,
        ) {
            let probs = SwitchProbs::single(alpha, beta).unwrap();
            let e = em(mu, lambda);
            let prior = StatePrior::new(1.0 - p_on, p_on).unwrap();
            let trace = CountTrace::new(counts).unwrap();
            let fast = trace_loglik_single(&trace, &probs, &e, &prior).unwrap().value();
            let slow = brute_force_loglik(&trace, &probs, &e, &prior).unwrap().value();
            prop_assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "{} vs {}", fast, slow);
        }
    }
}

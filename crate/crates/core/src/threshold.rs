//! Conventional threshold analysis: on/off assignment by an intensity
//! threshold, run-length histograms with exponential fits, the usual
//! threshold heuristics and sweeps over thresholds and binnings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{log_pmf, pmf, CountTrace};

pub const EM_MAX_ITER: usize = 200;
pub const EM_TOLERANCE: f64 = 1e-8;

/// `1` where `count > threshold`, `0` otherwise.
pub fn assign_states(trace: &CountTrace, threshold: f64) -> Vec<u8> {
    trace.counts().iter().map(|&c| u8::from(c as f64 > threshold)).collect()
}

/// Lengths of maximal on and off runs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunDurations {
    pub on: Vec<usize>,
    pub off: Vec<usize>,
}

/// Splits `states` into maximal runs. With `include_edges` false the first
/// and last runs, which are cut by the trace boundaries, are dropped.
pub fn run_durations(states: &[u8], include_edges: bool) -> RunDurations {
    let mut runs: Vec<(u8, usize)> = Vec::new();
    for &s in states {
        match runs.last_mut() {
            Some((state, len)) if *state == s => *len += 1,
            _ => runs.push((s, 1)),
        }
    }
    let keep = if include_edges {
        &runs[..]
    } else if runs.len() > 2 {
        &runs[1..runs.len() - 1]
    } else {
        &runs[..0]
    };
    let mut out = RunDurations::default();
    for &(s, len) in keep {
        if s == 1 {
            out.on.push(len);
        } else {
            out.off.push(len);
        }
    }
    out
}

/// Exponential fit to a duration histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationFit {
    /// Per-interval switching probability `1 - exp(-rate)`, floored at 0.
    pub prob: f64,
    /// Fitted decay rate (negated slope of the log density).
    pub rate: f64,
    pub intercept: f64,
    /// Euclidean norm of the log-density residuals.
    pub residual_norm: f64,
    pub bins_used: usize,
}

/// Equal-width histogram over `[min, max]` with the last bin closed.
/// A degenerate range is widened to `[x - 0.5, x + 0.5]`.
pub fn histogram(values: &[usize], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let lo = *values.iter().min().unwrap_or(&0) as f64;
    let hi = *values.iter().max().unwrap_or(&0) as f64;
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v as f64 - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    (edges, counts)
}

/// Least-squares line through `ln(density)` of the nonzero histogram bins
/// against bin centres.
pub fn fit_switch_prob(durations: &[usize], bins: usize) -> Result<DurationFit> {
    if bins < 2 {
        return Err(Error::InvalidParameter {
            name: "bins",
            value: bins as f64,
            reason: "need at least 2 bins",
        });
    }
    let (edges, counts) = histogram(durations, bins);
    let total = durations.len() as f64;
    let width = edges[1] - edges[0];
    let points: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(i, &n)| (0.5 * (edges[i] + edges[i + 1]), (n as f64 / (total * width)).ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::DegenerateHistogram { occupied: points.len() });
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_norm = points
        .iter()
        .map(|&(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        .sqrt();
    let rate = -slope;
    Ok(DurationFit {
        prob: (-(-rate).exp_m1()).max(0.0),
        rate,
        intercept,
        residual_norm,
        bins_used: points.len(),
    })
}

/// Switching probabilities estimated from a thresholded trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Off to on, from the off-run histogram.
    pub alpha_hat: f64,
    /// On to off, from the on-run histogram.
    pub beta_hat: f64,
    pub off_fit: DurationFit,
    pub on_fit: DurationFit,
}

pub fn estimate_switch_probs(
    trace: &CountTrace,
    threshold: f64,
    bins: usize,
    include_edges: bool,
) -> Result<RateEstimate> {
    let runs = run_durations(&assign_states(trace, threshold), include_edges);
    let off_fit = fit_switch_prob(&runs.off, bins)?;
    let on_fit = fit_switch_prob(&runs.on, bins)?;
    Ok(RateEstimate {
        alpha_hat: off_fit.prob,
        beta_hat: on_fit.prob,
        off_fit,
        on_fit,
    })
}

/// Two-component Poisson mixture, component 0 being the dimmer one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonMixture {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl PoissonMixture {
    pub fn pmf(&self, count: u32) -> f64 {
        self.weights[0] * pmf(self.means[0], count) + self.weights[1] * pmf(self.means[1], count)
    }
}

/// Fits a two-component Poisson mixture by EM, initialized by a 1-D
/// two-means clustering of the counts. `None` when the counts cannot be
/// split into two groups.
pub fn fit_poisson_mixture(trace: &CountTrace) -> Option<PoissonMixture> {
    let hist = count_histogram(trace);
    let (mut weights, mut means) = two_means(&hist)?;
    let n = trace.len() as f64;
    let mut prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut ll = f64::NEG_INFINITY;
    while iterations < EM_MAX_ITER {
        iterations += 1;
        let (mut r_sum, mut rc_sum) = ([0.0; 2], [0.0; 2]);
        ll = 0.0;
        for (c, &h) in hist.iter().enumerate() {
            if h == 0 {
                continue;
            }
            let l: [f64; 2] = std::array::from_fn(|k| weights[k].ln() + log_pmf(means[k], c as u32));
            let top = l[0].max(l[1]);
            let z = top + ((l[0] - top).exp() + (l[1] - top).exp()).ln();
            ll += h as f64 * z;
            for k in 0..2 {
                let r = h as f64 * (l[k] - z).exp();
                r_sum[k] += r;
                rc_sum[k] += r * c as f64;
            }
        }
        if r_sum[0] <= 0.0 || r_sum[1] <= 0.0 {
            return None;
        }
        for k in 0..2 {
            weights[k] = r_sum[k] / n;
            means[k] = rc_sum[k] / r_sum[k];
        }
        if (ll - prev).abs() <= EM_TOLERANCE * ll.abs() {
            break;
        }
        prev = ll;
    }
    if means[0] > means[1] {
        means.swap(0, 1);
        weights.swap(0, 1);
    }
    Some(PoissonMixture {
        weights,
        means,
        log_likelihood: ll,
        iterations,
    })
}

fn count_histogram(trace: &CountTrace) -> Vec<usize> {
    let mut hist = vec![0usize; trace.max_count() as usize + 1];
    for &c in trace.counts() {
        hist[c as usize] += 1;
    }
    hist
}

fn two_means(hist: &[usize]) -> Option<([f64; 2], [f64; 2])> {
    let lo = hist.iter().position(|&h| h > 0)? as f64;
    let hi = (hist.len() - 1) as f64;
    if lo == hi {
        return None;
    }
    let mut centres = [lo, hi];
    let mut weights = [0.0; 2];
    for _ in 0..100 {
        let split = 0.5 * (centres[0] + centres[1]);
        let (mut n, mut s) = ([0.0; 2], [0.0; 2]);
        for (c, &h) in hist.iter().enumerate() {
            let k = usize::from(c as f64 > split);
            n[k] += h as f64;
            s[k] += h as f64 * c as f64;
        }
        if n[0] == 0.0 || n[1] == 0.0 {
            return None;
        }
        let next = [s[0] / n[0], s[1] / n[1]];
        let total = n[0] + n[1];
        weights = [n[0] / total, n[1] / total];
        if next == centres {
            break;
        }
        centres = next;
    }
    Some((weights, centres))
}

/// The four threshold heuristics. Rules that need two peaks are `None`
/// when the fitted mixture shows a single peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteratureThresholds {
    pub mixture: Option<PoissonMixture>,
    pub background_mean: f64,
    /// Count at the minimum of the mixture pmf between its two peaks.
    pub between_peaks_minimum: Option<f64>,
    /// Background mean plus two Poisson standard deviations.
    pub background_two_sigma: f64,
    /// Smallest count above the background mean at which the background
    /// pmf scaled by the trace length drops below one.
    pub background_last_count: f64,
    /// Midpoint of the two component means.
    pub peak_midpoint: Option<f64>,
}

pub fn literature_thresholds(trace: &CountTrace) -> LiteratureThresholds {
    let mixture = fit_poisson_mixture(trace);
    let peaks = mixture.as_ref().and_then(|m| mixture_peaks(m, trace.max_count()));
    let background_mean = match (&mixture, &peaks) {
        (Some(m), Some(_)) => m.means[0],
        _ => trace.mean(),
    };
    let n = trace.len() as f64;
    let mut last = background_mean.floor() as u32 + 1;
    while n * pmf(background_mean, last) >= 1.0 {
        last += 1;
    }
    LiteratureThresholds {
        between_peaks_minimum: peaks.map(|(_, valley, _)| valley as f64),
        peak_midpoint: peaks.and(mixture.as_ref().map(|m| 0.5 * (m.means[0] + m.means[1]))),
        mixture,
        background_mean,
        background_two_sigma: background_mean + 2.0 * background_mean.sqrt(),
        background_last_count: last as f64,
    }
}

/// `(low peak, valley, high peak)` of the mixture pmf, or `None` when it
/// has a single local maximum.
fn mixture_peaks(m: &PoissonMixture, max_count: u32) -> Option<(u32, u32, u32)> {
    let top = (max_count as f64).max(m.means[1] + 10.0 * m.means[1].sqrt()).ceil() as u32 + 1;
    let g: Vec<f64> = (0..=top).map(|c| m.pmf(c)).collect();
    let is_peak = |c: usize| (c == 0 || g[c] > g[c - 1]) && (c + 1 >= g.len() || g[c] >= g[c + 1]);
    let peaks: Vec<usize> = (0..g.len()).filter(|&c| is_peak(c)).collect();
    if peaks.len() < 2 {
        return None;
    }
    // two highest peaks, in count order
    let mut by_height = peaks.clone();
    by_height.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
    let (lo, hi) = (by_height[0].min(by_height[1]), by_height[0].max(by_height[1]));
    let valley = (lo..=hi).min_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)))?;
    Some((lo as u32, valley as u32, hi as u32))
}

/// One configuration of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub bins: usize,
    pub estimate: Option<RateEstimate>,
    pub error: Option<String>,
}

/// All `(threshold, bins)` pairs, ordered by threshold then bins.
pub fn threshold_sweep(
    trace: &CountTrace,
    thresholds: &[f64],
    bin_counts: &[usize],
    include_edges: bool,
) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(thresholds.len() * bin_counts.len());
    for &threshold in thresholds {
        for &bins in bin_counts {
            let (estimate, error) = match estimate_switch_probs(trace, threshold, bins, include_edges) {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(SweepRow {
                threshold,
                bins,
                estimate,
                error,
            });
        }
    }
    rows
}

/// Mean and sample standard deviation of the estimates over rows whose
/// threshold lies in `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub alpha_mean: f64,
    pub alpha_sd: f64,
    pub beta_mean: f64,
    pub beta_sd: f64,
}

pub fn summarize_sweep(rows: &[SweepRow], lo: f64, hi: f64) -> SweepSummary {
    let picked: Vec<&RateEstimate> = rows
        .iter()
        .filter(|r| r.threshold >= lo && r.threshold <= hi)
        .filter_map(|r| r.estimate.as_ref())
        .collect();
    let stats = |xs: Vec<f64>| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    };
    let (alpha_mean, alpha_sd) = stats(picked.iter().map(|e| e.alpha_hat).collect());
    let (beta_mean, beta_sd) = stats(picked.iter().map(|e| e.beta_hat).collect());
    SweepSummary {
        rows: picked.len(),
        alpha_mean,
        alpha_sd,
        beta_mean,
        beta_sd,
    }
}

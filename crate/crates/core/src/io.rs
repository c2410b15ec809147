//! Text formats for traces, ground truth, posteriors, state posteriors and
//! threshold sweeps.
//!
//! CSV floats are written with 17 significant digits. The posterior JSON
//! uses the shortest decimal that parses back to the same double, so a
//! load followed by a save reproduces the file byte for byte.

use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernels::{CountTrace, InitialState};
use crate::posterior::{credible_regions, Model, Param, PosteriorGrid};
use crate::simulate::SimResult;
use crate::state::StatePosterior;
use crate::threshold::{LiteratureThresholds, SweepRow, SweepSummary};

pub const FORMAT_VERSION: u32 = 1;
pub const TRACE_HEADER: &str = "t,count";
pub const TRUTH_HEADER: &str = "t,state,on_fraction";
pub const STATE_HEADER: &str = "t,p_on";
pub const THRESHOLD_HEADER: &str = "record,threshold,bins,alpha_hat,beta_hat";

fn format_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace(mut out: impl Write, trace: &CountTrace) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}").map_err(io_err)?;
    for (t, c) in trace.counts().iter().enumerate() {
        writeln!(out, "{},{c}", t + 1).map_err(io_err)?;
    }
    Ok(())
}

/// Reads a `t,count` file. Interval indices must run 1, 2, ... in order.
pub fn read_trace(input: impl BufRead) -> Result<CountTrace> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == TRACE_HEADER => {}
        Some((_, Ok(h))) => return Err(format_err(1, format!("expected header `{TRACE_HEADER}`, found `{h}`"))),
        Some((_, Err(e))) => return Err(io_err(e)),
        None => return Err(Error::EmptyTrace),
    }
    let mut counts = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (t, c) = line
            .split_once(',')
            .ok_or_else(|| format_err(i + 1, "expected two fields"))?;
        let t: usize = t.trim().parse().map_err(|e| format_err(i + 1, e))?;
        if t != counts.len() + 1 {
            return Err(format_err(
                i + 1,
                format!("expected t = {}, found {t}", counts.len() + 1),
            ));
        }
        counts.push(c.trim().parse::<u32>().map_err(|e| format_err(i + 1, e))?);
    }
    CountTrace::new(counts)
}

/// Ground truth per interval: the state at the start of interval `t`
/// (which emits count `t`) and the fraction of the interval spent on.
pub fn write_truth(mut out: impl Write, sim: &SimResult) -> Result<()> {
    writeln!(out, "{TRUTH_HEADER}").map_err(io_err)?;
    for (t, f) in sim.on_fractions.iter().enumerate() {
        writeln!(out, "{},{},{}", t + 1, sim.boundary_states[t], fmt_f64(*f)).map_err(io_err)?;
    }
    Ok(())
}

/// Reads a truth file back as `(state, on_fraction)` pairs.
pub fn read_truth(input: impl BufRead) -> Result<Vec<(u8, f64)>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if i == 0 {
            if line.trim() != TRUTH_HEADER {
                return Err(format_err(1, format!("expected header `{TRUTH_HEADER}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(format_err(i + 1, "expected three fields"));
        }
        let state = fields[1].parse::<u8>().map_err(|e| format_err(i + 1, e))?;
        let frac = fields[2].parse::<f64>().map_err(|e| format_err(i + 1, e))?;
        rows.push((state, frac));
    }
    Ok(rows)
}

/// `t,p_on` with `p_on` the posterior probability that count `t` was
/// emitted in the on state.
pub fn write_state_posterior(mut out: impl Write, state: &StatePosterior) -> Result<()> {
    writeln!(out, "{STATE_HEADER}").map_err(io_err)?;
    for (t, p) in state.p_on().iter().enumerate() {
        writeln!(out, "{},{}", t + 1, fmt_f64(*p)).map_err(io_err)?;
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Sweep rows, then one row per threshold heuristic, then the summary
/// mean and standard deviation over the designated threshold range.
pub fn write_threshold_table(
    mut out: impl Write,
    rows: &[SweepRow],
    rules: &LiteratureThresholds,
    summary: &SweepSummary,
) -> Result<()> {
    let mut w = |s: String| writeln!(out, "{s}").map_err(io_err);
    w(THRESHOLD_HEADER.to_string())?;
    for r in rows {
        let (a, b) = match &r.estimate {
            Some(e) => (fmt_f64(e.alpha_hat), fmt_f64(e.beta_hat)),
            None => (String::new(), String::new()),
        };
        w(format!("sweep,{},{},{a},{b}", fmt_f64(r.threshold), r.bins))?;
    }
    w(format!("rule_between_peaks,{},,,", opt(rules.between_peaks_minimum)))?;
    w(format!(
        "rule_background_two_sigma,{},,,",
        fmt_f64(rules.background_two_sigma)
    ))?;
    w(format!(
        "rule_background_last_count,{},,,",
        fmt_f64(rules.background_last_count)
    ))?;
    w(format!("rule_peak_midpoint,{},,,", opt(rules.peak_midpoint)))?;
    w(format!(
        "summary_mean,,{},{},{}",
        summary.rows,
        fmt_f64(summary.alpha_mean),
        fmt_f64(summary.beta_mean)
    ))?;
    w(format!(
        "summary_sd,,{},{},{}",
        summary.rows,
        fmt_f64(summary.alpha_sd),
        fmt_f64(summary.beta_sd)
    ))
}

/// `f64` that serializes `-inf` as `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue(pub f64);

impl Serialize for LogValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for LogValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(LogValue(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRecord {
    pub name: Param,
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: Param,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRecord {
    pub axes: Vec<Param>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub level: f64,
    pub threshold: f64,
    pub contained_mass: f64,
    pub cells: usize,
}

/// On-disk posterior. Tensors are flat, row-major in `axes` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFile {
    pub format_version: u32,
    pub model: String,
    pub d: Option<u32>,
    pub quad_nodes: Option<usize>,
    pub initial_state: InitialState,
    pub n_counts: usize,
    pub axes: Vec<AxisRecord>,
    pub fixed: Vec<NamedValue>,
    pub shape: Vec<usize>,
    pub log_posterior: Vec<LogValue>,
    pub marginals: Vec<MarginalRecord>,
    /// Joint marginal of the two switching parameters when both are free.
    pub pair_marginal: Option<MarginalRecord>,
    pub mode: Vec<NamedValue>,
    /// HPD regions of the pair marginal, or of the single free axis.
    pub credible_regions: Vec<RegionRecord>,
}

impl PosteriorFile {
    pub fn from_posterior(
        post: &PosteriorGrid,
        n_counts: usize,
        initial: InitialState,
        levels: &[f64],
    ) -> Result<Self> {
        let (d, quad_nodes) = match post.model {
            Model::Single => (None, None),
            Model::Ctmc { quad } => (None, Some(quad.nodes)),
            Model::Multistep { d } => (Some(d), None),
        };
        let free = post.free_params();
        let marginals = free
            .iter()
            .map(|&p| {
                Ok(MarginalRecord {
                    axes: vec![p],
                    values: post.marginalize(&[p])?.values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (sa, sb) = post.model.switch_params();
        let pair = if free.contains(&sa) && free.contains(&sb) {
            Some(post.marginalize(&[sa, sb])?)
        } else {
            None
        };
        let region_source = match (&pair, free.as_slice()) {
            (Some(m), _) => Some(m.clone()),
            (None, [only]) => Some(post.marginalize(&[*only])?),
            _ => None,
        };
        let regions = match region_source {
            Some(m) => credible_regions(&m, levels)?
                .into_iter()
                .map(|r| RegionRecord {
                    level: r.level,
                    threshold: r.threshold,
                    contained_mass: r.contained_mass,
                    cells: r.cell_count(),
                })
                .collect(),
            None => Vec::new(),
        };
        Ok(Self {
            format_version: FORMAT_VERSION,
            model: post.model.name().to_string(),
            d,
            quad_nodes,
            initial_state: initial,
            n_counts,
            axes: post
                .grid
                .axes
                .iter()
                .map(|a| AxisRecord {
                    name: a.param,
                    lower: a.lower,
                    upper: a.upper,
                    points: a.points,
                    values: a.values(),
                })
                .collect(),
            fixed: post
                .grid
                .fixed
                .iter()
                .map(|&(name, value)| NamedValue { name, value })
                .collect(),
            shape: post.shape(),
            log_posterior: post.log_post.iter().map(|&l| LogValue(l)).collect(),
            marginals,
            pair_marginal: pair.map(|m| MarginalRecord {
                axes: m.axes.iter().map(|a| a.param).collect(),
                values: m.values,
            }),
            mode: post
                .mode()
                .into_iter()
                .map(|(name, value)| NamedValue { name, value })
                .collect(),
            credible_regions: regions,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        Ok(file)
    }

    pub fn mode_value(&self, param: Param) -> Option<f64> {
        self.mode.iter().find(|v| v.name == param).map(|v| v.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{EmissionRates, SwitchProbs};
    use crate::posterior::{evaluate_grid, Axis, GridSpec};
    use crate::simulate::sim_dtmc_single;

    #[test]
    fn trace_round_trip() {
        let t = CountTrace::new(vec![0, 5, 22, 3]).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &t).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "t,count\n1,0\n2,5\n3,22\n4,3\n"
        );
        assert_eq!(read_trace(&buf[..]).unwrap(), t);
    }

    #[test]
    fn malformed_traces() {
        assert!(read_trace(&b"t,count\n"[..]).is_err());
        assert!(read_trace(&b"time,count\n1,2\n"[..]).is_err());
        assert!(read_trace(&b"t,count\n2,4\n"[..]).is_err());
        assert!(read_trace(&b"t,count\n1,-4\n"[..]).is_err());
        assert!(read_trace(&b""[..]).is_err());
    }

    #[test]
    fn truth_round_trip() {
        let probs = SwitchProbs::new(0.3, 0.2, 4).unwrap();
        let sim = crate::simulate::sim_dtmc_multi(
            &probs,
            &EmissionRates::new(2.0, 20.0).unwrap(),
            50,
            InitialState::Stationary,
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_truth(&mut buf, &sim).unwrap();
        let rows = read_truth(&buf[..]).unwrap();
        assert_eq!(rows.len(), 50);
        for (t, (s, f)) in rows.iter().enumerate() {
            assert_eq!(*s, sim.boundary_states[t]);
            assert_eq!(*f, sim.on_fractions[t]);
        }
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn posterior_json_round_trips_bytes() {
        let probs = SwitchProbs::single(0.3, 0.4).unwrap();
        let e = EmissionRates::new(2.0, 20.0).unwrap();
        let sim = sim_dtmc_single(&probs, &e, 300, InitialState::Stationary, 4).unwrap();
        let grid = GridSpec::new(
            vec![
                Axis::new(Param::Alpha, 0.0, 1.0, 11).unwrap(),
                Axis::new(Param::Beta, 0.05, 0.95, 7).unwrap(),
                Axis::new(Param::Mu, 0.0, 3.0, 3).unwrap(),
            ],
            vec![(Param::Lambda, 20.0)],
        );
        let post = evaluate_grid(&sim.trace, &Model::Single, &grid, InitialState::Stationary, 1).unwrap();
        // no background and no switching on: any nonzero count is impossible
        assert!(post.log_post.iter().any(|l| l.is_infinite()));
        let file = PosteriorFile::from_posterior(&post, 300, InitialState::Stationary, &[0.5, 0.9, 0.99]).unwrap();
        let text = file.to_json().unwrap();
        let back = PosteriorFile::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        assert_eq!(back.shape, vec![11, 7, 3]);
        assert_eq!(back.credible_regions.len(), 3);
        assert_eq!(back.pair_marginal.as_ref().unwrap().values.len(), 77);
        assert_eq!(back.mode_value(Param::Lambda), Some(20.0));
        assert!(text.contains("\"format_version\":1"));
    }
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use blinkfit::io::{read_trace, write_state_posterior, write_threshold_table, write_trace, write_truth, PosteriorFile};
use blinkfit::kernels::{
    probs_from_rates, CountTrace, EmissionRates, InitialState, StatePrior, SwitchProbs, SwitchRates,
};
use blinkfit::posterior::{evaluate_grid, Axis, GridSpec, Model, Param};
use blinkfit::quadrature::QuadratureSpec;
use blinkfit::simulate::{sim_ctmc, sim_dtmc_multi, sim_dtmc_single, RNG_ALGORITHM};
use blinkfit::state::state_posterior_marginal;
use blinkfit::threshold::{literature_thresholds, summarize_sweep, threshold_sweep};

const DEFAULT_POINTS: usize = 70;

#[derive(Parser)]
#[command(
    name = "blinkfit",
    version,
    about = "Switching-rate inference for blinking emitters from photon counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a count trace and its hidden ground truth.
    Simulate(SimulateArgs),
    /// Grid posterior over switching (and optionally emission) parameters.
    Infer(InferArgs),
    /// Per-interval probability of the on state (single-step model).
    InferState(InferArgs),
    /// Threshold analysis sweep and the usual threshold heuristics.
    Threshold(ThresholdArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Single,
    Ctmc,
    Multistep,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Initial {
    Stationary,
    Off,
    On,
}

impl Initial {
    fn state(self) -> InitialState {
        match self {
            Initial::Stationary => InitialState::Stationary,
            Initial::Off => InitialState::Fixed(StatePrior::off()),
            Initial::On => InitialState::Fixed(StatePrior::on()),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "single")]
    model: ModelKind,
    /// Sub-steps per interval (multistep only, power of two).
    #[arg(long)]
    d: Option<u32>,
    /// Off-to-on switching probability per interval (single).
    #[arg(long)]
    alpha: Option<f64>,
    /// On-to-off switching probability per interval (single).
    #[arg(long)]
    beta: Option<f64>,
    /// Off-to-on switching rate per interval (ctmc, multistep).
    #[arg(long)]
    r_alpha: Option<f64>,
    /// On-to-off switching rate per interval (ctmc, multistep).
    #[arg(long)]
    r_beta: Option<f64>,
    /// Extra counts per interval while on.
    #[arg(long)]
    lambda: f64,
    /// Background counts per interval.
    #[arg(long)]
    mu: f64,
    /// Number of intervals.
    #[arg(long)]
    n: usize,
    /// Physical length of one detector interval. When set, rates are read
    /// per unit of physical time and converted to per-interval values.
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "stationary")]
    initial: Initial,
    /// Trace CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth CSV to write.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long, value_enum, default_value = "single")]
    model: ModelKind,
    /// Sub-steps per interval; chosen from the grid when omitted.
    #[arg(long)]
    d: Option<u32>,
    /// Free axis `name=lo:hi[:points]` (repeatable).
    #[arg(long = "grid", value_name = "AXIS")]
    grid: Vec<String>,
    /// Known parameter `name=value` (repeatable).
    #[arg(long = "fix", value_name = "PARAM")]
    fix: Vec<String>,
    #[arg(long)]
    quad_nodes: Option<usize>,
    /// Physical length of one detector interval. When set, rates are read
    /// per unit of physical time and converted to per-interval values.
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value = "stationary")]
    initial: Initial,
    /// Credible levels for the HPD regions.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.99")]
    levels: Vec<f64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Thresholds as `lo:hi` (integer steps) or a comma list.
    #[arg(long, default_value = "15:24")]
    thresholds: String,
    /// Histogram bin counts as `lo:hi` or a comma list.
    #[arg(long, default_value = "8:12")]
    bins: String,
    /// Threshold range `lo:hi` used for the summary statistics.
    #[arg(long, default_value = "17:21")]
    reasonable: String,
    /// Drop the runs cut by the start and end of the trace.
    #[arg(long)]
    exclude_edges: bool,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Infer(a) => infer(a),
        Command::InferState(a) => infer_state(a),
        Command::Threshold(a) => threshold(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_trace(path: &Path) -> Result<CountTrace> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    read_trace(BufReader::new(file)).with_context(|| format!("invalid trace file {}", path.display()))
}

fn need(value: Option<f64>, flag: &str, model: &str) -> Result<f64> {
    value.with_context(|| format!("--{flag} is required for the {model} model"))
}

fn check_interval(interval: f64) -> Result<f64> {
    if !(interval.is_finite() && interval > 0.0) {
        bail!("--interval must be positive, got {interval}");
    }
    Ok(interval)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let t = check_interval(a.interval)?;
    let per = |x: Option<f64>| x.map(|v| v * t);
    let (r_alpha, r_beta) = (per(a.r_alpha), per(a.r_beta));
    let emissions = EmissionRates::new(a.mu * t, a.lambda * t)?;
    let initial = a.initial.state();
    if a.d.is_some() && a.model != ModelKind::Multistep {
        bail!("--d applies to the multistep model only");
    }
    let sim = match a.model {
        ModelKind::Single => {
            let probs = SwitchProbs::single(need(a.alpha, "alpha", "single")?, need(a.beta, "beta", "single")?)?;
            sim_dtmc_single(&probs, &emissions, a.n, initial, a.seed)?
        }
        ModelKind::Ctmc => {
            let rates = SwitchRates::new(need(r_alpha, "r-alpha", "ctmc")?, need(r_beta, "r-beta", "ctmc")?)?;
            sim_ctmc(&rates, &emissions, a.n, initial, a.seed)?
        }
        ModelKind::Multistep => {
            let rates = SwitchRates::new(
                need(r_alpha, "r-alpha", "multistep")?,
                need(r_beta, "r-beta", "multistep")?,
            )?;
            let d = a.d.context("--d is required to simulate the multistep model")?;
            sim_dtmc_multi(&probs_from_rates(&rates, d)?, &emissions, a.n, initial, a.seed)?
        }
    };
    let mut out = create(&a.out)?;
    write_trace(&mut out, &sim.trace)?;
    out.flush()?;
    if let Some(path) = &a.truth {
        let mut out = create(path)?;
        write_truth(&mut out, &sim)?;
        out.flush()?;
    }
    println!("seed {} ({RNG_ALGORITHM})", sim.seed);
    Ok(())
}

fn to_interval(param: Param, value: f64, interval: f64) -> f64 {
    if param.is_probability() {
        value
    } else {
        value * interval
    }
}

fn parse_grid(grid: &[String], fix: &[String], interval: f64) -> Result<GridSpec> {
    let mut axes = Vec::new();
    for g in grid {
        let (name, range) = g
            .split_once('=')
            .with_context(|| format!("expected name=lo:hi[:n], got `{g}`"))?;
        let parts: Vec<&str> = range.split(':').collect();
        let (lo, hi, n) = match parts.as_slice() {
            [lo, hi] => (lo.parse::<f64>()?, hi.parse::<f64>()?, DEFAULT_POINTS),
            [lo, hi, n] => (lo.parse::<f64>()?, hi.parse::<f64>()?, n.parse::<usize>()?),
            _ => bail!("expected name=lo:hi[:n], got `{g}`"),
        };
        let param = Param::parse(name.trim())?;
        axes.push(Axis::new(
            param,
            to_interval(param, lo, interval),
            to_interval(param, hi, interval),
            n,
        )?);
    }
    let mut fixed = Vec::new();
    for f in fix {
        let (name, value) = f
            .split_once('=')
            .with_context(|| format!("expected name=value, got `{f}`"))?;
        let param = Param::parse(name.trim())?;
        fixed.push((param, to_interval(param, value.trim().parse::<f64>()?, interval)));
    }
    Ok(GridSpec::new(axes, fixed))
}

fn resolve_model(a: &InferArgs, grid: &GridSpec) -> Result<(Model, bool)> {
    if a.d.is_some() && a.model != ModelKind::Multistep {
        bail!("--d applies to the multistep model only");
    }
    if a.quad_nodes.is_some() && a.model != ModelKind::Ctmc {
        bail!("--quad-nodes applies to the ctmc model only");
    }
    Ok(match a.model {
        ModelKind::Single => (Model::Single, false),
        ModelKind::Ctmc => {
            let quad = match a.quad_nodes {
                Some(n) => QuadratureSpec::with_nodes(n)?,
                None => QuadratureSpec::default(),
            };
            (Model::Ctmc { quad }, false)
        }
        ModelKind::Multistep => match a.d {
            Some(d) => (Model::Multistep { d }, false),
            None => (Model::multistep_auto(grid), true),
        },
    })
}

fn infer(a: InferArgs) -> Result<()> {
    let trace = load_trace(&a.input)?;
    let grid = parse_grid(&a.grid, &a.fix, check_interval(a.interval)?)?;
    let (model, auto) = resolve_model(&a, &grid)?;
    if let (true, Model::Multistep { d }) = (auto, model) {
        println!("selected d = {d}");
    }
    let initial = a.initial.state();
    let post = evaluate_grid(&trace, &model, &grid, initial, a.workers)?;
    let file = PosteriorFile::from_posterior(&post, trace.len(), initial, &a.levels)?;
    let mut out = create(&a.out)?;
    out.write_all(file.to_json()?.as_bytes())?;
    out.flush()?;
    // the file stays in per-interval units; the summary line uses the caller's units
    let mode: Vec<String> = file
        .mode
        .iter()
        .map(|v| format!("{}={}", v.name.name(), to_interval(v.name, v.value, 1.0 / a.interval)))
        .collect();
    println!("mode {}", mode.join(" "));
    Ok(())
}

fn infer_state(a: InferArgs) -> Result<()> {
    if a.model != ModelKind::Single {
        bail!("state inference is available for the single-step model only");
    }
    let trace = load_trace(&a.input)?;
    let grid = parse_grid(&a.grid, &a.fix, check_interval(a.interval)?)?;
    resolve_model(&a, &grid)?;
    let state = state_posterior_marginal(&trace, &grid, a.initial.state(), a.workers)?;
    let mut out = create(&a.out)?;
    write_state_posterior(&mut out, &state)?;
    out.flush()?;
    Ok(())
}

fn parse_list(spec: &str) -> Result<Vec<f64>> {
    if let Some((lo, hi)) = spec.split_once(':') {
        let (lo, hi): (i64, i64) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo > hi {
            bail!("empty range `{spec}`");
        }
        Ok((lo..=hi).map(|x| x as f64).collect())
    } else {
        spec.split(',').map(|s| Ok(s.trim().parse::<f64>()?)).collect()
    }
}

fn threshold(a: ThresholdArgs) -> Result<()> {
    let trace = load_trace(&a.input)?;
    let thresholds = parse_list(&a.thresholds)?;
    let bins: Vec<usize> = parse_list(&a.bins)?
        .into_iter()
        .map(|b| {
            if b >= 2.0 && b.fract() == 0.0 {
                Ok(b as usize)
            } else {
                bail!("invalid bin count {b}")
            }
        })
        .collect::<Result<_>>()?;
    let reasonable = parse_list(&a.reasonable)?;
    let (lo, hi) = (reasonable[0], *reasonable.last().unwrap());
    let rows = threshold_sweep(&trace, &thresholds, &bins, !a.exclude_edges);
    let rules = literature_thresholds(&trace);
    let summary = summarize_sweep(&rows, lo, hi);
    let mut out = create(&a.out)?;
    write_threshold_table(&mut out, &rows, &rules, &summary)?;
    out.flush()?;
    Ok(())
}

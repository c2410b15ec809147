//! Grid posteriors over switching and emission parameters under flat priors.
//!
//! A grid is a box in parameter space with an inclusive linear spacing per
//! free axis; any of the four model parameters may instead be held at a
//! known value. The log-posterior of a cell equals the trace log-likelihood
//! at that cell. Marginalizing over emission rates is summation over
//! their axes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctmc::FractionTable;
use crate::error::{Error, Result};
use crate::forward::forward_raw;
use crate::kernels::{fill_pmf_table, CountTrace, EmissionRates, InitialState, SwitchProbs, SwitchRates};
use crate::multistep::{auto_select_d, multistep_step_table};
use crate::quadrature::QuadratureSpec;

/// Grid parameters. Switching parameters are per-step probabilities for
/// the single-step model and rates for the other two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Alpha,
    Beta,
    RAlpha,
    RBeta,
    Lambda,
    Mu,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::Alpha,
        Param::Beta,
        Param::RAlpha,
        Param::RBeta,
        Param::Lambda,
        Param::Mu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::Beta => "beta",
            Param::RAlpha => "r_alpha",
            Param::RBeta => "r_beta",
            Param::Lambda => "lambda",
            Param::Mu => "mu",
        }
    }

    pub fn parse(name: &str) -> Result<Param> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidGrid(format!("unknown parameter `{name}`")))
    }

    pub fn is_probability(self) -> bool {
        matches!(self, Param::Alpha | Param::Beta)
    }
}

impl std::fmt::Display for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One free grid axis with `points` inclusive, evenly spaced values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: Param,
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(param: Param, lower: f64, upper: f64, points: usize) -> Result<Self> {
        let axis = Self {
            param,
            lower,
            upper,
            points,
        };
        axis.validate()?;
        Ok(axis)
    }

    fn validate(&self) -> Result<()> {
        let name = self.param.name();
        if !(self.lower.is_finite() && self.upper.is_finite()) || self.lower >= self.upper {
            return Err(Error::InvalidGrid(format!(
                "axis {name}: bounds must be finite with lower < upper"
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidGrid(format!("axis {name}: needs at least 2 points")));
        }
        check_value(self.param, self.lower)?;
        check_value(self.param, self.upper)
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            return self.upper;
        }
        let step = (self.upper - self.lower) / (self.points - 1) as f64;
        self.lower + i as f64 * step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }

    /// Index of the grid value closest to `x` (lower index on ties).
    pub fn nearest(&self, x: f64) -> usize {
        let step = (self.upper - self.lower) / (self.points - 1) as f64;
        let pos = ((x - self.lower) / step).clamp(0.0, (self.points - 1) as f64);
        let lo = pos.floor() as usize;
        if lo + 1 < self.points && (self.value(lo + 1) - x).abs() < (x - self.value(lo)).abs() {
            lo + 1
        } else {
            lo
        }
    }
}

fn check_value(param: Param, x: f64) -> Result<()> {
    let ok = if param.is_probability() {
        (0.0..=1.0).contains(&x)
    } else {
        x.is_finite() && x >= 0.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidGrid(format!("{param} = {x} is out of range")))
    }
}

/// Free axes plus known parameter values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub fixed: Vec<(Param, f64)>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>, fixed: Vec<(Param, f64)>) -> Self {
        Self { axes, fixed }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    /// Checks that each parameter of `model` is given exactly once and
    /// that no foreign parameter appears.
    pub fn validate_for(&self, model: &Model) -> Result<()> {
        let (sa, sb) = model.switch_params();
        let wanted = [sa, sb, Param::Lambda, Param::Mu];
        let mut seen = Vec::new();
        for axis in &self.axes {
            axis.validate()?;
            seen.push(axis.param);
        }
        for &(p, v) in &self.fixed {
            check_value(p, v)?;
            seen.push(p);
        }
        for p in &seen {
            if !wanted.contains(p) {
                return Err(Error::InvalidGrid(format!(
                    "parameter {p} does not belong to the {} model",
                    model.name()
                )));
            }
        }
        for p in wanted {
            match seen.iter().filter(|&&q| q == p).count() {
                0 => {
                    return Err(Error::InvalidGrid(format!(
                        "parameter {p} is neither gridded nor fixed"
                    )))
                }
                1 => {}
                _ => return Err(Error::InvalidGrid(format!("parameter {p} is given more than once"))),
            }
        }
        if self.cell_count() == 0 {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        Ok(())
    }

    fn locate(&self, p: Param) -> Slot {
        if let Some(i) = self.axes.iter().position(|a| a.param == p) {
            Slot::Axis(i)
        } else {
            let v = self.fixed.iter().find(|(q, _)| *q == p).map(|&(_, v)| v);
            Slot::Fixed(v.unwrap_or(f64::NAN))
        }
    }

    /// Parameter values of every cell for `params`, in row-major order.
    pub fn cell_values(&self, params: &[Param]) -> Vec<Vec<f64>> {
        let shape = self.shape();
        let slots: Vec<Slot> = params.iter().map(|&p| self.locate(p)).collect();
        (0..self.cell_count())
            .map(|flat| {
                let idx = unravel(flat, &shape);
                slots.iter().map(|s| s.value(&self.axes, &idx)).collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Axis(usize),
    Fixed(f64),
}

impl Slot {
    fn value(&self, axes: &[Axis], idx: &[usize]) -> f64 {
        match *self {
            Slot::Axis(i) => axes[i].value(idx[i]),
            Slot::Fixed(v) => v,
        }
    }

    fn extent(&self, axes: &[Axis]) -> usize {
        match *self {
            Slot::Axis(i) => axes[i].points,
            Slot::Fixed(_) => 1,
        }
    }

    fn index(&self, idx: &[usize]) -> usize {
        match *self {
            Slot::Axis(i) => idx[i],
            Slot::Fixed(_) => 0,
        }
    }

    fn value_at(&self, axes: &[Axis], k: usize) -> f64 {
        match *self {
            Slot::Axis(i) => axes[i].value(k),
            Slot::Fixed(v) => v,
        }
    }
}

/// Row-major multi-index of a flat index.
pub fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (i, &n) in shape.iter().enumerate().rev() {
        idx[i] = flat % n;
        flat /= n;
    }
    idx
}

/// Flat index of a row-major multi-index.
pub fn ravel(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Likelihood model used for grid evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Single,
    Ctmc { quad: QuadratureSpec },
    Multistep { d: u32 },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Single => "single",
            Model::Ctmc { .. } => "ctmc",
            Model::Multistep { .. } => "multistep",
        }
    }

    /// The two switching parameters used by this model.
    pub fn switch_params(&self) -> (Param, Param) {
        match self {
            Model::Single => (Param::Alpha, Param::Beta),
            _ => (Param::RAlpha, Param::RBeta),
        }
    }

    /// Multi-step model with `d` chosen from the largest rate product on
    /// the grid.
    pub fn multistep_auto(grid: &GridSpec) -> Model {
        let top = |p: Param| match grid.locate(p) {
            Slot::Axis(i) => grid.axes[i].upper,
            Slot::Fixed(v) => v,
        };
        Model::Multistep {
            d: auto_select_d(top(Param::RAlpha) * top(Param::RBeta)),
        }
    }
}

/// Log-posterior and normalized posterior over the free axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    pub model: Model,
    pub grid: GridSpec,
    pub log_post: Vec<f64>,
    pub post: Vec<f64>,
}

/// A normalized array over a subset of axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
}

/// Highest-posterior-density region of a marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibleRegion {
    pub level: f64,
    /// Smallest cell probability included.
    pub threshold: f64,
    pub mask: Vec<bool>,
    pub contained_mass: f64,
}

/// Evaluates the log-likelihood at every grid cell on `workers` threads.
/// The result does not depend on `workers`.
pub fn evaluate_grid(
    trace: &CountTrace,
    model: &Model,
    grid: &GridSpec,
    initial: InitialState,
    workers: usize,
) -> Result<PosteriorGrid> {
    grid.validate_for(model)?;
    if let Model::Ctmc { quad } = model {
        quad.validate()?;
    }
    let (sa, sb) = model.switch_params();
    let slots = [
        grid.locate(sa),
        grid.locate(sb),
        grid.locate(Param::Lambda),
        grid.locate(Param::Mu),
    ];
    let extents: Vec<usize> = slots.iter().map(|s| s.extent(&grid.axes)).collect();
    let pairs: Vec<(f64, f64)> = (0..extents[0] * extents[1])
        .map(|k| {
            (
                slots[0].value_at(&grid.axes, k / extents[1]),
                slots[1].value_at(&grid.axes, k % extents[1]),
            )
        })
        .collect();
    let emissions: Vec<EmissionRates> = (0..extents[2] * extents[3])
        .map(|k| {
            EmissionRates::new(
                slots[3].value_at(&grid.axes, k % extents[3]),
                slots[2].value_at(&grid.axes, k / extents[3]),
            )
        })
        .collect::<Result<_>>()?;

    let eval = CellEvaluator::new(trace, model, &emissions);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidGrid(format!("cannot start worker pool: {e}")))?;
    let by_pair: Vec<Vec<f64>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(x, y)| eval.pair(x, y, &emissions, initial))
            .collect::<Result<Vec<_>>>()
    })?;

    let shape = grid.shape();
    let log_post: Vec<f64> = (0..grid.cell_count())
        .map(|flat| {
            let idx = unravel(flat, &shape);
            let pair = slots[0].index(&idx) * extents[1] + slots[1].index(&idx);
            let em = slots[2].index(&idx) * extents[3] + slots[3].index(&idx);
            by_pair[pair][em]
        })
        .collect();
    let post = normalize_log(&log_post)?;
    Ok(PosteriorGrid {
        model: *model,
        grid: grid.clone(),
        log_post,
        post,
    })
}

/// Exponentiates after subtracting the maximum and normalizes to unit sum.
pub fn normalize_log(log_post: &[f64]) -> Result<Vec<f64>> {
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::InvalidGrid(
            "the trace has zero likelihood at every grid cell".into(),
        ));
    }
    let mut post: Vec<f64> = log_post.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = post.iter().sum();
    for p in &mut post {
        *p /= total;
    }
    Ok(post)
}

/// Per-model shared state for evaluating every emission cell at one pair
/// of switching parameters.
struct CellEvaluator<'a> {
    counts: &'a [u32],
    max_count: u32,
    model: Model,
    /// Single-step only: `(off, on)` count pmfs per emission cell.
    pmfs: Vec<(Vec<f64>, Vec<f64>)>,
    rule: Option<crate::quadrature::UnitRule>,
}

impl<'a> CellEvaluator<'a> {
    fn new(trace: &'a CountTrace, model: &Model, emissions: &[EmissionRates]) -> Self {
        let max_count = trace.max_count();
        let n = max_count as usize + 1;
        let pmfs = if matches!(model, Model::Single) {
            emissions
                .iter()
                .map(|e| {
                    let mut off = vec![0.0; n];
                    let mut on = vec![0.0; n];
                    fill_pmf_table(e.mu, &mut off);
                    fill_pmf_table(e.on_rate(), &mut on);
                    (off, on)
                })
                .collect()
        } else {
            Vec::new()
        };
        let rule = match model {
            Model::Ctmc { quad } => Some(quad.rule()),
            _ => None,
        };
        Self {
            counts: trace.counts(),
            max_count,
            model: *model,
            pmfs,
            rule,
        }
    }

    fn pair(&self, x: f64, y: f64, emissions: &[EmissionRates], initial: InitialState) -> Result<Vec<f64>> {
        match self.model {
            Model::Single => {
                let probs = SwitchProbs::single(x, y)?;
                let prior = initial.for_probs(&probs).as_vector();
                let mut table = vec![[[0.0; 2]; 2]; self.max_count as usize + 1];
                Ok(self
                    .pmfs
                    .iter()
                    .map(|(off, on)| {
                        for ((e, &p0), &p1) in table.iter_mut().zip(off).zip(on) {
                            *e = [
                                [p0 * (1.0 - probs.alpha), p1 * probs.beta],
                                [p0 * probs.alpha, p1 * (1.0 - probs.beta)],
                            ];
                        }
                        forward_raw(self.counts, &table, prior).1
                    })
                    .collect())
            }
            Model::Ctmc { .. } => {
                let rates = SwitchRates::new(x, y)?;
                let prior = initial.for_rates(&rates).as_vector();
                let fractions = FractionTable::new(&rates, self.rule.as_ref().expect("rule"));
                Ok(emissions
                    .iter()
                    .map(|e| {
                        let table = fractions.step_table(self.max_count, e);
                        forward_raw(self.counts, table.raw(), prior).1
                    })
                    .collect())
            }
            Model::Multistep { d } => {
                let rates = SwitchRates::new(x, y)?;
                let prior = initial.for_rates(&rates).as_vector();
                emissions
                    .iter()
                    .map(|e| {
                        let table = multistep_step_table(self.max_count, d, &rates, e)?;
                        Ok(forward_raw(self.counts, table.raw(), prior).1)
                    })
                    .collect()
            }
        }
    }
}

impl PosteriorGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.grid.shape()
    }

    pub fn free_params(&self) -> Vec<Param> {
        self.grid.axes.iter().map(|a| a.param).collect()
    }

    /// The full normalized posterior as a marginal over every free axis.
    pub fn joint(&self) -> Marginal {
        Marginal {
            axes: self.grid.axes.clone(),
            values: self.post.clone(),
        }
    }

    pub fn marginalize(&self, keep: &[Param]) -> Result<Marginal> {
        self.joint().marginalize(keep)
    }

    /// Flat index of the largest posterior cell, lowest index on ties.
    pub fn mode_index(&self) -> usize {
        argmax(&self.post)
    }

    /// All parameter values at the mode, free axes first in axis order,
    /// followed by the fixed values.
    pub fn mode(&self) -> Vec<(Param, f64)> {
        let idx = unravel(self.mode_index(), &self.shape());
        let mut point: Vec<(Param, f64)> = self
            .grid
            .axes
            .iter()
            .zip(&idx)
            .map(|(a, &i)| (a.param, a.value(i)))
            .collect();
        point.extend(self.grid.fixed.iter().copied());
        point
    }

    /// Mode of the switching parameters, in model order.
    pub fn switch_mode(&self) -> (f64, f64) {
        let (sa, sb) = self.model.switch_params();
        let mode = self.mode();
        (lookup(&mode, sa), lookup(&mode, sb))
    }

    /// Marginal over the two switching parameters, if both are free.
    pub fn switch_marginal(&self) -> Result<Marginal> {
        let (sa, sb) = self.model.switch_params();
        self.marginalize(&[sa, sb])
    }
}

/// Value of `param` in a parameter tuple, NaN when absent.
pub fn lookup(point: &[(Param, f64)], param: Param) -> f64 {
    point.iter().find(|(p, _)| *p == param).map_or(f64::NAN, |&(_, v)| v)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Marginal {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    /// Sums out every axis not in `keep`. Kept axes retain their order.
    pub fn marginalize(&self, keep: &[Param]) -> Result<Marginal> {
        for p in keep {
            if !self.axes.iter().any(|a| a.param == *p) {
                return Err(Error::InvalidGrid(format!("{p} is not a free axis")));
            }
        }
        let kept: Vec<usize> = (0..self.axes.len())
            .filter(|&i| keep.contains(&self.axes[i].param))
            .collect();
        let shape = self.shape();
        let out_shape: Vec<usize> = kept.iter().map(|&i| shape[i]).collect();
        let mut values = vec![0.0; out_shape.iter().product()];
        for (flat, &p) in self.values.iter().enumerate() {
            let idx = unravel(flat, &shape);
            let sub: Vec<usize> = kept.iter().map(|&i| idx[i]).collect();
            values[ravel(&sub, &out_shape)] += p;
        }
        let total: f64 = values.iter().sum();
        for v in &mut values {
            *v /= total;
        }
        Ok(Marginal {
            axes: kept.iter().map(|&i| self.axes[i].clone()).collect(),
            values,
        })
    }

    pub fn mode_index(&self) -> usize {
        argmax(&self.values)
    }

    pub fn mode(&self) -> Vec<f64> {
        let idx = unravel(self.mode_index(), &self.shape());
        self.axes.iter().zip(idx).map(|(a, i)| a.value(i)).collect()
    }

    /// Flat index of the cell nearest to `point` (one value per axis).
    pub fn nearest_cell(&self, point: &[f64]) -> usize {
        let idx: Vec<usize> = self.axes.iter().zip(point).map(|(a, &x)| a.nearest(x)).collect();
        ravel(&idx, &self.shape())
    }
}

/// HPD regions of `marginal` for each level in `(0, 1)`.
pub fn credible_regions(marginal: &Marginal, levels: &[f64]) -> Result<Vec<CredibleRegion>> {
    let mut order: Vec<usize> = (0..marginal.values.len()).collect();
    order.sort_by(|&i, &j| marginal.values[j].total_cmp(&marginal.values[i]).then(i.cmp(&j)));
    levels
        .iter()
        .map(|&level| {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::InvalidLevel(level));
            }
            let mut acc = 0.0;
            let mut threshold = marginal.values[order[order.len() - 1]];
            for &i in &order {
                acc += marginal.values[i];
                if acc >= level {
                    threshold = marginal.values[i];
                    break;
                }
            }
            let mask: Vec<bool> = marginal.values.iter().map(|&p| p >= threshold).collect();
            let contained_mass = marginal
                .values
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(p, _)| p)
                .sum();
            Ok(CredibleRegion {
                level,
                threshold,
                mask,
                contained_mass,
            })
        })
        .collect()
}

impl CredibleRegion {
    pub fn cell_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Whether the cell nearest to `point` lies in the region.
    pub fn contains(&self, marginal: &Marginal, point: &[f64]) -> bool {
        self.mask[marginal.nearest_cell(point)]
    }
}

/// Euclidean distance between the true switching parameters and the
/// posterior mode.
pub fn inference_error(truth: (f64, f64), posterior: &PosteriorGrid) -> f64 {
    let (x, y) = posterior.switch_mode();
    (x - truth.0).hypot(y - truth.1)
}

/// Relative error of each switching parameter at the mode.
pub fn relative_mode_error(truth: (f64, f64), posterior: &PosteriorGrid) -> (f64, f64) {
    let (x, y) = posterior.switch_mode();
    ((x - truth.0).abs() / truth.0, (y - truth.1).abs() / truth.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::trace_loglik_ctmc;
    use crate::kernels::StatePrior;
    use crate::multistep::trace_loglik_multistep;
    use crate::single::trace_loglik_single;

    fn trace() -> CountTrace {
        CountTrace::new(vec![1, 3, 22, 19, 25, 2, 0, 4, 18, 21, 3, 1]).unwrap()
    }

    fn ab_grid(n: usize) -> GridSpec {
        GridSpec::new(
            vec![
                Axis::new(Param::Alpha, 0.05, 0.95, n).unwrap(),
                Axis::new(Param::Beta, 0.05, 0.95, n).unwrap(),
            ],
            vec![(Param::Lambda, 20.0), (Param::Mu, 2.0)],
        )
    }

    #[test]
    fn axis_values_are_inclusive() {
        let a = Axis::new(Param::Lambda, 1.0, 3.0, 5).unwrap();
        assert_eq!(a.values(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(a.nearest(2.2), 2);
        assert_eq!(a.nearest(-7.0), 0);
        assert_eq!(a.nearest(9.0), 4);
        assert!(Axis::new(Param::Alpha, 0.5, 1.2, 4).is_err());
        assert!(Axis::new(Param::Mu, 2.0, 1.0, 4).is_err());
        assert!(Axis::new(Param::Mu, 1.0, 2.0, 1).is_err());
    }

    #[test]
    fn grid_must_match_model() {
        let g = ab_grid(4);
        assert!(g.validate_for(&Model::Single).is_ok());
        assert!(g.validate_for(&Model::Multistep { d: 2 }).is_err());
        let mut missing = g.clone();
        missing.fixed.pop();
        assert!(missing.validate_for(&Model::Single).is_err());
        let mut twice = g.clone();
        twice.fixed.push((Param::Mu, 1.0));
        assert!(twice.validate_for(&Model::Single).is_err());
    }

    #[test]
    fn cells_match_direct_likelihoods() {
        let t = trace();
        let prior = InitialState::Stationary;
        let g = ab_grid(5);
        let post = evaluate_grid(&t, &Model::Single, &g, prior, 2).unwrap();
        for (flat, v) in g.cell_values(&[Param::Alpha, Param::Beta]).iter().enumerate() {
            let probs = SwitchProbs::single(v[0], v[1]).unwrap();
            let e = EmissionRates::new(2.0, 20.0).unwrap();
            let direct = trace_loglik_single(&t, &probs, &e, &prior.for_probs(&probs))
                .unwrap()
                .value();
            assert!((post.log_post[flat] - direct).abs() <= 1e-12 * direct.abs());
        }

        let rg = GridSpec::new(
            vec![
                Axis::new(Param::RAlpha, 0.2, 3.0, 3).unwrap(),
                Axis::new(Param::Mu, 1.0, 3.0, 3).unwrap(),
            ],
            vec![(Param::RBeta, 1.1), (Param::Lambda, 20.0)],
        );
        let quad = QuadratureSpec::default();
        let ctmc = evaluate_grid(&t, &Model::Ctmc { quad }, &rg, prior, 1).unwrap();
        let ms = evaluate_grid(&t, &Model::Multistep { d: 4 }, &rg, prior, 1).unwrap();
        for (flat, v) in rg.cell_values(&[Param::RAlpha, Param::Mu]).iter().enumerate() {
            let rates = SwitchRates::new(v[0], 1.1).unwrap();
            let e = EmissionRates::new(v[1], 20.0).unwrap();
            let p = prior.for_rates(&rates);
            let c = trace_loglik_ctmc(&t, &rates, &e, &p, &quad).unwrap().value();
            let m = trace_loglik_multistep(&t, &rates, &e, &p, 4).unwrap().value();
            assert!((ctmc.log_post[flat] - c).abs() <= 1e-12 * c.abs());
            assert!((ms.log_post[flat] - m).abs() <= 1e-12 * m.abs());
        }
    }

    #[test]
    fn normalized_and_worker_invariant() {
        let t = trace();
        let g = GridSpec::new(
            vec![
                Axis::new(Param::Alpha, 0.05, 0.95, 6).unwrap(),
                Axis::new(Param::Beta, 0.05, 0.95, 5).unwrap(),
                Axis::new(Param::Lambda, 15.0, 25.0, 4).unwrap(),
                Axis::new(Param::Mu, 1.0, 3.0, 3).unwrap(),
            ],
            vec![],
        );
        let one = evaluate_grid(&t, &Model::Single, &g, InitialState::Stationary, 1).unwrap();
        let four = evaluate_grid(&t, &Model::Single, &g, InitialState::Stationary, 4).unwrap();
        assert_eq!(one, four);
        assert!((one.post.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert_eq!(one.post.len(), 6 * 5 * 4 * 3);
    }

    #[test]
    fn single_count_trace_is_proper() {
        let t = CountTrace::new(vec![7]).unwrap();
        let post = evaluate_grid(&t, &Model::Single, &ab_grid(7), InitialState::Stationary, 1).unwrap();
        assert!((post.post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_impossible_is_an_error() {
        let t = CountTrace::new(vec![3]).unwrap();
        let g = GridSpec::new(
            vec![
                Axis::new(Param::Alpha, 0.1, 0.9, 3).unwrap(),
                Axis::new(Param::Beta, 0.1, 0.9, 3).unwrap(),
            ],
            vec![(Param::Lambda, 0.0), (Param::Mu, 0.0)],
        );
        assert!(evaluate_grid(&t, &Model::Single, &g, InitialState::Stationary, 1).is_err());
    }

    fn synthetic(values: Vec<f64>, axes: Vec<Axis>) -> Marginal {
        let total: f64 = values.iter().sum();
        Marginal {
            axes,
            values: values.into_iter().map(|v| v / total).collect(),
        }
    }

    fn axes3() -> Vec<Axis> {
        vec![
            Axis::new(Param::Alpha, 0.0, 1.0, 3).unwrap(),
            Axis::new(Param::Beta, 0.0, 1.0, 4).unwrap(),
            Axis::new(Param::Mu, 0.0, 1.0, 2).unwrap(),
        ]
    }

    #[test]
    fn marginalization_properties() {
        let values: Vec<f64> = (0..24).map(|i| 1.0 + ((i * 7) % 5) as f64).collect();
        let m = synthetic(values, axes3());
        let same = m.marginalize(&[Param::Alpha, Param::Beta, Param::Mu]).unwrap();
        assert_eq!(same.axes, m.axes);
        for (x, y) in same.values.iter().zip(&m.values) {
            assert!((x - y).abs() < 1e-16);
        }
        let direct = m.marginalize(&[Param::Beta]).unwrap();
        let twice = m
            .marginalize(&[Param::Alpha, Param::Beta])
            .unwrap()
            .marginalize(&[Param::Beta])
            .unwrap();
        for (x, y) in direct.values.iter().zip(&twice.values) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(m.marginalize(&[Param::Lambda]).is_err());
    }

    #[test]
    fn separable_marginal_is_outer_product() {
        let u = [0.2, 0.5, 0.3];
        let v = [0.1, 0.4, 0.3, 0.2];
        let w = [0.6, 0.4];
        let mut values = Vec::new();
        for a in u {
            for b in v {
                for c in w {
                    values.push(a * b * c);
                }
            }
        }
        let m = synthetic(values, axes3());
        let pair = m.marginalize(&[Param::Alpha, Param::Beta]).unwrap();
        let ua = m.marginalize(&[Param::Alpha]).unwrap();
        let vb = m.marginalize(&[Param::Beta]).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert!((pair.values[i * 4 + j] - ua.values[i] * vb.values[j]).abs() < 1e-15);
            }
        }
    }

    fn axes2(n: usize, m: usize) -> Vec<Axis> {
        vec![
            Axis::new(Param::Alpha, 0.0, 1.0, n).unwrap(),
            Axis::new(Param::Beta, 0.0, 1.0, m).unwrap(),
        ]
    }

    #[test]
    fn credible_region_examples() {
        let uniform = synthetic(vec![1.0; 10], axes2(2, 5));
        let r = &credible_regions(&uniform, &[0.5]).unwrap()[0];
        // every cell ties at the threshold, so all are kept
        assert_eq!(r.cell_count(), 10);
        assert!(r.contained_mass >= 0.5);

        let mut spike = vec![0.0; 12];
        spike[7] = 1.0;
        let spike = synthetic(spike, axes2(3, 4));
        for r in credible_regions(&spike, &[0.5, 0.9, 0.99]).unwrap() {
            assert_eq!(r.cell_count(), 1);
            assert!(r.mask[7]);
        }
        assert!(credible_regions(&spike, &[1.0]).is_err());
        assert!(credible_regions(&spike, &[0.0]).is_err());
    }

    #[test]
    fn credible_regions_are_nested() {
        let values: Vec<f64> = (0..48).map(|i| ((i * 13) % 17) as f64 + 0.5).collect();
        let m = synthetic(values, axes2(6, 8));
        let rs = credible_regions(&m, &[0.5, 0.9, 0.99]).unwrap();
        for w in rs.windows(2) {
            assert!(w[0].mask.iter().zip(&w[1].mask).all(|(&a, &b)| !a || b));
        }
        for r in &rs {
            assert!(r.contained_mass >= r.level);
            // cells strictly above the threshold fall short of the level
            let above: f64 = m.values.iter().filter(|&&p| p > r.threshold).sum();
            assert!(above < r.level);
        }
    }

    #[test]
    fn mode_is_first_maximum() {
        let mut values = vec![1.0; 12];
        values[5] = 3.0;
        values[9] = 3.0;
        let m = synthetic(values, axes2(3, 4));
        assert_eq!(m.mode_index(), 5);
        assert_eq!(m.mode(), vec![m.axes[0].value(1), m.axes[1].value(1)]);
    }

    #[test]
    fn mode_is_invariant_under_monotone_rescaling() {
        let t = trace();
        let post = evaluate_grid(&t, &Model::Single, &ab_grid(9), InitialState::Stationary, 1).unwrap();
        let shifted: Vec<f64> = post.log_post.iter().map(|l| 3.0 * l - 100.0).collect();
        assert_eq!(argmax(&normalize_log(&shifted).unwrap()), post.mode_index());
        assert_eq!(inference_error(post.switch_mode(), &post), 0.0);
        let e1 = inference_error((0.3, 0.4), &post);
        let m = post.switch_mode();
        assert!((e1 - (m.0 - 0.3).hypot(m.1 - 0.4)).abs() < 1e-15);
    }

    #[test]
    fn auto_multistep_uses_grid_corner() {
        let g = GridSpec::new(
            vec![
                Axis::new(Param::RAlpha, 0.0, 8.0, 3).unwrap(),
                Axis::new(Param::RBeta, 0.0, 8.0, 3).unwrap(),
            ],
            vec![(Param::Lambda, 20.0), (Param::Mu, 2.0)],
        );
        assert_eq!(Model::multistep_auto(&g), Model::Multistep { d: 32 });
    }

    #[test]
    fn fixed_initial_state_is_honoured() {
        let t = CountTrace::new(vec![30]).unwrap();
        let g = ab_grid(3);
        let off = evaluate_grid(&t, &Model::Single, &g, InitialState::Fixed(StatePrior::off()), 1).unwrap();
        let on = evaluate_grid(&t, &Model::Single, &g, InitialState::Fixed(StatePrior::on()), 1).unwrap();
        assert!(on.log_post[0] > off.log_post[0]);
    }
}

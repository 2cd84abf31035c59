//! Dense trajectories and pantograph segments.
//!
//! A [`DensePath`] stores every grid point from `θ̲·t0` onwards and
//! interpolates linearly in between. Pantograph memory reaches back to
//! `θ̲·t`, a fixed fraction of the whole history, so nothing is ever evicted:
//! memory grows linearly with the number of steps.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::Regime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("time {t} outside the stored domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },
    #[error("path exploded at t = {exploded_at}; no value at {t}")]
    PathExploded { t: f64, exploded_at: f64 },
    #[error("segment anchor {t} precedes the initial time {t0}")]
    AnchorBeforeStart { t: f64, t0: f64 },
    #[error("invalid path data: {0}")]
    Invalid(String),
}

/// Initial data `ξ` on `[θ̲·t0, t0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSegment {
    /// `ξ(s) = c` for every `s`.
    Constant(Vec<f64>),
    /// Linear interpolation through `(time, value)` knots. The knots must
    /// cover `[θ̲·t0, t0]`.
    Tabulated { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl InitialSegment {
    pub fn constant_scalar(c: f64) -> Self {
        InitialSegment::Constant(vec![c])
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialSegment::Constant(c) => c.len(),
            InitialSegment::Tabulated { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    /// Checks dimension and coverage of `[start, end]`.
    pub fn validate(&self, dim: usize, start: f64, end: f64) -> Result<(), PathError> {
        if self.dim() != dim {
            return Err(PathError::Invalid(format!(
                "initial segment has dimension {}, model has {dim}",
                self.dim()
            )));
        }
        match self {
            InitialSegment::Constant(c) => {
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(PathError::Invalid("non-finite initial value".into()));
                }
            }
            InitialSegment::Tabulated { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(PathError::Invalid("tabulated segment: times/values mismatch".into()));
                }
                if values.iter().any(|v| v.len() != dim) {
                    return Err(PathError::Invalid("tabulated segment: ragged values".into()));
                }
                if !times.windows(2).all(|w| w[0] < w[1]) {
                    return Err(PathError::Invalid("tabulated segment: times not increasing".into()));
                }
                if times[0] > start || *times.last().unwrap() < end {
                    return Err(PathError::Invalid(format!(
                        "tabulated segment covers [{}, {}], need [{start}, {end}]",
                        times[0],
                        times.last().unwrap()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Knots of the initial segment restricted to `[start, end]`, endpoints included.
    fn knots(&self, start: f64, end: f64) -> Vec<(f64, Vec<f64>)> {
        match self {
            InitialSegment::Constant(c) => {
                if start < end {
                    vec![(start, c.clone()), (end, c.clone())]
                } else {
                    vec![(end, c.clone())]
                }
            }
            InitialSegment::Tabulated { times, values } => {
                let at = |t: f64| -> Vec<f64> {
                    let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
                    if times.len() == 1 {
                        return values[0].clone();
                    }
                    let (a, b) = (times[k - 1], times[k]);
                    let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
                    values[k - 1]
                        .iter()
                        .zip(&values[k])
                        .map(|(x, y)| x + w * (y - x))
                        .collect()
                };
                let mut out = vec![(start, at(start))];
                for (t, v) in times.iter().zip(values) {
                    if *t > start && *t < end {
                        out.push((*t, v.clone()));
                    }
                }
                if end > start {
                    out.push((end, at(end)));
                }
                out
            }
        }
    }
}

/// Why integration of a path stopped early.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowUpKind {
    /// `|x|` exceeded the configured threshold.
    Threshold,
    /// The state became NaN or infinite before reaching the threshold.
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowUp {
    pub time: f64,
    pub kind: BlowUpKind,
}

/// A trajectory on `[θ̲·t0, T]` with piecewise-linear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePath {
    dim: usize,
    theta_lower: f64,
    t0: f64,
    times: Vec<f64>,
    /// Row-major, `dim` values per grid point.
    values: Vec<f64>,
    /// Index of `t0` in `times`.
    start: usize,
    /// `regimes[k]` is the regime on `[times[start + k], times[start + k + 1])`.
    regimes: Vec<Regime>,
    blowup: Option<BlowUp>,
}

impl DensePath {
    /// A path holding only the initial segment, with the chain starting in `initial`.
    pub fn from_initial(
        dim: usize,
        theta_lower: f64,
        t0: f64,
        xi: &InitialSegment,
        initial: Regime,
    ) -> Result<Self, PathError> {
        if !(theta_lower > 0.0 && theta_lower < 1.0) {
            return Err(PathError::Invalid(format!("theta_lower {theta_lower} not in (0, 1)")));
        }
        if !(t0 > 0.0) {
            return Err(PathError::Invalid(format!("t0 = {t0} must be positive")));
        }
        let start_time = theta_lower * t0;
        xi.validate(dim, start_time, t0)?;
        let knots = xi.knots(start_time, t0);
        let mut times = Vec::with_capacity(knots.len());
        let mut values = Vec::with_capacity(knots.len() * dim);
        for (t, v) in knots {
            times.push(t);
            values.extend_from_slice(&v);
        }
        let start = times.len() - 1;
        Ok(DensePath {
            dim,
            theta_lower,
            t0,
            times,
            values,
            start,
            regimes: vec![initial],
            blowup: None,
        })
    }

    /// Builds a path from tabulated samples. `times` must start at
    /// `θ̲·t0`, contain `t0`, and `regimes` has one entry per grid point at
    /// or after `t0`.
    pub fn from_samples(
        dim: usize,
        theta_lower: f64,
        t0: f64,
        times: Vec<f64>,
        values: Vec<f64>,
        regimes: Vec<Regime>,
    ) -> Result<Self, PathError> {
        if values.len() != times.len() * dim || dim == 0 {
            return Err(PathError::Invalid("values length must be dim * times length".into()));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(PathError::Invalid("times must be strictly increasing".into()));
        }
        if times.first() != Some(&(theta_lower * t0)) {
            return Err(PathError::Invalid("first time must equal theta_lower * t0".into()));
        }
        let start = times
            .iter()
            .position(|&t| t == t0)
            .ok_or_else(|| PathError::Invalid("grid must contain t0".into()))?;
        if regimes.len() != times.len() - start {
            return Err(PathError::Invalid("one regime per grid point from t0 on".into()));
        }
        Ok(DensePath {
            dim,
            theta_lower,
            t0,
            times,
            values,
            start,
            regimes,
            blowup: None,
        })
    }

    /// Appends a grid point. `regime` is the regime in force from `t` on.
    pub(crate) fn push(&mut self, t: f64, x: &[f64], regime: Regime) {
        debug_assert!(t > self.last_time());
        debug_assert_eq!(x.len(), self.dim);
        self.times.push(t);
        self.values.extend_from_slice(x);
        self.regimes.push(regime);
    }

    pub(crate) fn mark_blowup(&mut self, blowup: BlowUp) {
        self.blowup = Some(blowup);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta_lower(&self) -> f64 {
        self.theta_lower
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the grid point `t0`.
    pub fn start_index(&self) -> usize {
        self.start
    }

    pub fn value_at_index(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_value(&self) -> &[f64] {
        self.value_at_index(self.times.len() - 1)
    }

    pub fn blowup(&self) -> Option<BlowUp> {
        self.blowup
    }

    /// Time at which the blow-up guard tripped, if it did.
    pub fn exploded_at(&self) -> Option<f64> {
        self.blowup.map(|b| b.time)
    }

    pub fn is_exploded(&self) -> bool {
        self.blowup.is_some()
    }

    /// Regime in force at `t ≥ t0` (right-continuous). Before `t0` the
    /// initial regime is reported.
    pub fn regime_at(&self, t: f64) -> Regime {
        let k = self.times[self.start..].partition_point(|&s| s <= t);
        self.regimes[k.saturating_sub(1).min(self.regimes.len() - 1)]
    }

    /// Regime at grid index `k` (initial regime for `k < start`).
    pub fn regime_at_index(&self, k: usize) -> Regime {
        self.regimes[k.saturating_sub(self.start)]
    }

    fn check_domain(&self, t: f64) -> Result<(), PathError> {
        let start = self.times[0];
        let end = self.last_time();
        if t > end {
            if let Some(b) = self.blowup {
                return Err(PathError::PathExploded { t, exploded_at: b.time });
            }
        }
        if !(t >= start && t <= end) {
            return Err(PathError::OutOfDomain { t, start, end });
        }
        Ok(())
    }

    /// Writes `x(t)` into `out`. Exact at grid points, linear in between.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), PathError> {
        self.check_domain(t)?;
        self.interpolate(t, out);
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, PathError> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Interpolation without domain checks; `t` must lie in the stored domain.
    pub(crate) fn interpolate(&self, t: f64, out: &mut [f64]) {
        let k = self.times.partition_point(|&s| s < t);
        if k < self.times.len() && self.times[k] == t {
            out.copy_from_slice(self.value_at_index(k));
            return;
        }
        debug_assert!(k > 0 && k < self.times.len(), "lookup at {t} outside stored path");
        let k = k.clamp(1, self.times.len() - 1);
        let (a, b) = (self.times[k - 1], self.times[k]);
        let w = (t - a) / (b - a);
        let lo = self.value_at_index(k - 1);
        let hi = self.value_at_index(k);
        for ((o, x), y) in out.iter_mut().zip(lo).zip(hi) {
            *o = x + w * (y - x);
        }
    }

    /// Segment `θ ↦ x(θ t)` anchored at `t ≥ t0`.
    pub fn segment(&self, t: f64) -> Result<SegmentView<'_>, PathError> {
        if t < self.t0 {
            return Err(PathError::AnchorBeforeStart { t, t0: self.t0 });
        }
        self.check_domain(t)?;
        Ok(SegmentView { path: self, anchor: t })
    }

    /// CSV with columns `time, regime, x_1..x_n`. Rows before `t0` carry the
    /// initial regime.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string(), "regime".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k].to_string(), self.regime_at_index(k).to_string()];
            row.extend(self.value_at_index(k).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        x[0].abs()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A function `φ: [θ̲, 1] → Rⁿ`, the argument of the coefficients `f` and `g`.
pub trait Segment {
    fn dim(&self) -> usize;

    fn theta_lower(&self) -> f64;

    /// Writes `φ(θ)` into `out`. `θ` is clamped to `[θ̲, 1]`.
    fn value_into(&self, theta: f64, out: &mut [f64]);

    fn value(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.value_into(theta, &mut out);
        out
    }

    /// `‖φ‖ = sup_θ |φ(θ)|`, here by sampling `nodes` equispaced points.
    fn sup_norm(&self, nodes: usize) -> f64 {
        let nodes = nodes.max(2);
        let lo = self.theta_lower();
        let mut buf = vec![0.0; self.dim()];
        (0..nodes)
            .map(|k| {
                let theta = lo + (1.0 - lo) * k as f64 / (nodes - 1) as f64;
                self.value_into(theta, &mut buf);
                norm(&buf)
            })
            .fold(0.0, f64::max)
    }
}

/// `φ(θ) = x(θ t)` read from a [`DensePath`].
#[derive(Clone, Copy, Debug)]
pub struct SegmentView<'a> {
    path: &'a DensePath,
    anchor: f64,
}

impl<'a> SegmentView<'a> {
    /// View anchored at the last stored point; used while integrating.
    pub(crate) fn at_head(path: &'a DensePath) -> Self {
        SegmentView {
            path,
            anchor: path.last_time(),
        }
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn path(&self) -> &'a DensePath {
        self.path
    }
}

impl Segment for SegmentView<'_> {
    fn dim(&self) -> usize {
        self.path.dim
    }

    fn theta_lower(&self) -> f64 {
        self.path.theta_lower
    }

    fn value_into(&self, theta: f64, out: &mut [f64]) {
        let theta = theta.clamp(self.path.theta_lower, 1.0);
        let t = if theta == 1.0 { self.anchor } else { theta * self.anchor };
        // pantograph causality: memory lookups never reach past the anchor
        debug_assert!(t <= self.anchor);
        self.path.interpolate(t, out);
    }

    /// Exact for the piecewise-linear path: the maximum of a convex norm over
    /// each linear piece sits at a breakpoint.
    fn sup_norm(&self, _nodes: usize) -> f64 {
        let lo = self.path.theta_lower * self.anchor;
        let hi = self.anchor;
        let times = &self.path.times;
        let first = times.partition_point(|&s| s <= lo);
        let last = times.partition_point(|&s| s < hi);
        let mut best = norm(&self.value(self.path.theta_lower)).max(norm(&self.value(1.0)));
        for k in first..last {
            best = best.max(norm(self.path.value_at_index(k)));
        }
        best
    }
}

/// `φ ≡ c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantSegment {
    pub value: Vec<f64>,
    pub theta_lower: f64,
}

impl ConstantSegment {
    pub fn scalar(c: f64, theta_lower: f64) -> Self {
        ConstantSegment {
            value: vec![c],
            theta_lower,
        }
    }
}

impl Segment for ConstantSegment {
    fn dim(&self) -> usize {
        self.value.len()
    }

    fn theta_lower(&self) -> f64 {
        self.theta_lower
    }

    fn value_into(&self, _theta: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }

    fn sup_norm(&self, _nodes: usize) -> f64 {
        norm(&self.value)
    }
}

/// A segment given by a closure.
pub struct FnSegment<F> {
    pub dim: usize,
    pub theta_lower: f64,
    pub f: F,
}

impl<F: Fn(f64, &mut [f64])> Segment for FnSegment<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn theta_lower(&self) -> f64 {
        self.theta_lower
    }

    fn value_into(&self, theta: f64, out: &mut [f64]) {
        (self.f)(theta.clamp(self.theta_lower, 1.0), out)
    }
}

/// Piecewise-linear segment through `(θ_k, φ_k)` knots covering `[θ̲, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotSegment {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
}

impl Segment for KnotSegment {
    fn dim(&self) -> usize {
        1
    }

    fn theta_lower(&self) -> f64 {
        self.thetas[0]
    }

    fn value_into(&self, theta: f64, out: &mut [f64]) {
        let th = &self.thetas;
        let theta = theta.clamp(th[0], *th.last().unwrap());
        let k = th.partition_point(|&s| s < theta).clamp(1, th.len() - 1);
        let w = (theta - th[k - 1]) / (th[k] - th[k - 1]);
        out[0] = self.values[k - 1] + w * (self.values[k] - self.values[k - 1]);
    }

    fn sup_norm(&self, _nodes: usize) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

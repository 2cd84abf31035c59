//! Monte Carlo estimates of decay rates and time averages.
//!
//! All statistics are read on the batch's uniform observation grid. Rates
//! are fitted on the tail window `[t0 + (T − t0)/2, T]`:
//!
//! * moment: slope of `log E|x(t)|^p` against `t`;
//! * almost sure: per-path slope of `log |x(t)|^p` against `t`;
//! * polynomial: per-path slope of `log |x(t)|^p` against `log(1 + t)`;
//! * time average: `(t − t0)^{-1} ∫_{t0}^{t} E|x(s)|^p ds`, reported at `T`.
//!
//! Exploded paths are left out and counted. Logarithms are taken after
//! flooring at [`LOG_FLOOR`].

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::SimulationBatch;
use crate::parallel::{map_slice, Execution};
use crate::paths::{norm, DensePath};
use crate::stats;

pub const LOG_FLOOR: f64 = 1e-300;
pub const DEFAULT_MIN_PATHS: usize = 100;
/// Reported per-path slope quantiles.
pub const QUANTILES: [f64; 3] = [0.5, 0.9, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("every path exploded")]
    AllExploded,
    #[error("only {have} usable paths, need at least {need}")]
    TooFewPaths { have: usize, need: usize },
    #[error("regression window [{0}, {1}] holds fewer than three observations")]
    DegenerateWindow(f64, f64),
    #[error("log(1 + T) = {0} is below 3; horizon too short for a polynomial rate")]
    HorizonTooShort(f64),
    #[error("power must be positive")]
    InvalidPower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateKind {
    #[serde(rename = "moment")]
    MomentExponential,
    #[serde(rename = "as")]
    AlmostSureExponential,
    #[serde(rename = "avg")]
    TimeAverage,
    #[serde(rename = "poly")]
    AlmostSurePolynomial,
}

impl std::str::FromStr for RateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moment" => Ok(RateKind::MomentExponential),
            "as" => Ok(RateKind::AlmostSureExponential),
            "avg" => Ok(RateKind::TimeAverage),
            "poly" => Ok(RateKind::AlmostSurePolynomial),
            other => Err(format!("unknown estimator kind `{other}` (moment, as, avg, poly)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub kind: RateKind,
    pub power: f64,
    /// Slope for the rate kinds (worst path for per-path kinds); the time
    /// average at `T` for [`RateKind::TimeAverage`].
    pub fitted_rate: f64,
    /// Monte Carlo standard error of the reported statistic (of the mean
    /// slope for per-path kinds).
    pub stderr: f64,
    /// Residual-based slope error of the regression, where one is fitted.
    pub fit_stderr: Option<f64>,
    pub window: (f64, f64),
    pub n_paths_used: usize,
    pub n_exploded: usize,
    /// `(q, slope quantile)` for per-path kinds.
    pub quantiles: Vec<(f64, f64)>,
    /// `(t, statistic)`: the moment, the mean log, or the running average.
    pub series: Vec<(f64, f64)>,
}

impl RateReport {
    /// Statistic at the observation time closest to `t`.
    pub fn statistic_at(&self, t: f64) -> Option<f64> {
        self.series
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|p| p.1)
    }

    /// `t,statistic` rows followed by a key/value footer.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "statistic"])?;
        for (t, s) in &self.series {
            w.write_record([t.to_string(), s.to_string()])?;
        }
        let mut footer = vec![
            ("fitted_rate".to_string(), self.fitted_rate.to_string()),
            ("stderr".to_string(), self.stderr.to_string()),
            ("window_start".to_string(), self.window.0.to_string()),
            ("window_end".to_string(), self.window.1.to_string()),
            ("n_paths_used".to_string(), self.n_paths_used.to_string()),
            ("n_exploded".to_string(), self.n_exploded.to_string()),
        ];
        for (q, v) in &self.quantiles {
            footer.push((format!("quantile_{q}"), v.to_string()));
        }
        for (k, v) in footer {
            w.write_record([k, v])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorOptions {
    pub min_paths: usize,
    pub exec: Execution,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            min_paths: DEFAULT_MIN_PATHS,
            exec: Execution::default(),
        }
    }
}

/// Surviving paths and the shared grid.
struct Prepared<'a> {
    paths: Vec<&'a DensePath>,
    times: Vec<f64>,
    n_exploded: usize,
    t0: f64,
    t_end: f64,
}

fn prepare<'a>(
    batch: &'a SimulationBatch,
    power: f64,
    opts: &EstimatorOptions,
) -> Result<Prepared<'a>, EstimatorError> {
    if !(power > 0.0) {
        return Err(EstimatorError::InvalidPower);
    }
    let paths: Vec<&DensePath> = batch.paths().iter().filter(|p| !p.is_exploded()).collect();
    let n_exploded = batch.n_paths() - paths.len();
    if paths.is_empty() {
        return Err(EstimatorError::AllExploded);
    }
    if paths.len() < opts.min_paths {
        return Err(EstimatorError::TooFewPaths {
            have: paths.len(),
            need: opts.min_paths,
        });
    }
    Ok(Prepared {
        paths,
        times: batch.observation_times(),
        n_exploded,
        t0: batch.t0(),
        t_end: batch.config.t_end,
    })
}

impl Prepared<'_> {
    fn window(&self) -> (f64, f64) {
        (self.t0 + 0.5 * (self.t_end - self.t0), self.t_end)
    }

    /// Index of the first observation inside the window.
    fn window_start(&self) -> Result<usize, EstimatorError> {
        let (a, b) = self.window();
        let k = self.times.partition_point(|&t| t < a - 1e-12 * a.abs().max(1.0));
        if self.times.len() - k < 3 {
            return Err(EstimatorError::DegenerateWindow(a, b));
        }
        Ok(k)
    }

    /// `|x(t)|^p` on the grid, one row per path.
    fn powers(&self, power: f64, exec: Execution) -> Vec<Vec<f64>> {
        map_slice(&self.paths, exec, |p| {
            let mut buf = vec![0.0; p.dim()];
            self.times
                .iter()
                .map(|&t| {
                    p.eval_into(t, &mut buf).expect("non-exploded path covers the grid");
                    norm(&buf).powf(power)
                })
                .collect()
        })
    }

    /// Column means in path order.
    fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
        let n = rows[0].len();
        (0..n)
            .map(|j| stats::sum(rows.iter().map(|r| r[j])) / rows.len() as f64)
            .collect()
    }
}

fn ln_floor(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

/// Slope of `log E|x(t)|^p` on the tail window. The standard error comes
/// from the delta method: the slope is `Σ c_j log m_j`, so per path
/// `z_i = Σ c_j |x_i(t_j)|^p / m_j` and the error is `sd(z)/√n`.
pub fn estimate_moment_rate(batch: &SimulationBatch, power: f64) -> Result<RateReport, EstimatorError> {
    estimate_moment_rate_with(batch, power, &EstimatorOptions::default())
}

pub fn estimate_moment_rate_with(
    batch: &SimulationBatch,
    power: f64,
    opts: &EstimatorOptions,
) -> Result<RateReport, EstimatorError> {
    let prep = prepare(batch, power, opts)?;
    let k0 = prep.window_start()?;
    let rows = prep.powers(power, opts.exec);
    let means = Prepared::column_means(&rows);
    let xs = &prep.times[k0..];
    let ys: Vec<f64> = means[k0..].iter().map(|&m| ln_floor(m)).collect();
    let fit = stats::linear_fit(xs, &ys).ok_or(EstimatorError::DegenerateWindow(prep.window().0, prep.window().1))?;
    let c = stats::slope_weights(xs);
    let z: Vec<f64> = rows
        .iter()
        .map(|r| {
            stats::sum(
                c.iter()
                    .zip(&r[k0..])
                    .zip(&means[k0..])
                    .map(|((cj, v), m)| if *m > 0.0 { cj * v / m } else { 0.0 }),
            )
        })
        .collect();
    Ok(RateReport {
        kind: RateKind::MomentExponential,
        power,
        fitted_rate: fit.slope,
        stderr: stats::std_error(&z),
        fit_stderr: Some(fit.slope_stderr),
        window: prep.window(),
        n_paths_used: prep.paths.len(),
        n_exploded: prep.n_exploded,
        quantiles: Vec::new(),
        series: prep.times.iter().copied().zip(means).collect(),
    })
}

fn per_path_slopes(
    batch: &SimulationBatch,
    power: f64,
    opts: &EstimatorOptions,
    kind: RateKind,
) -> Result<RateReport, EstimatorError> {
    let prep = prepare(batch, power, opts)?;
    if kind == RateKind::AlmostSurePolynomial {
        let span = (1.0 + prep.t_end).ln();
        if span < 3.0 {
            return Err(EstimatorError::HorizonTooShort(span));
        }
    }
    let k0 = prep.window_start()?;
    let abscissa: Vec<f64> = prep.times[k0..]
        .iter()
        .map(|&t| {
            if kind == RateKind::AlmostSurePolynomial {
                (1.0 + t).ln()
            } else {
                t
            }
        })
        .collect();
    let c = stats::slope_weights(&abscissa);
    let rows: Vec<Vec<f64>> = prep
        .powers(power, opts.exec)
        .into_iter()
        .map(|r| r.into_iter().map(ln_floor).collect())
        .collect();
    let slopes: Vec<f64> = rows
        .iter()
        .map(|r| stats::sum(c.iter().zip(&r[k0..]).map(|(cj, y)| cj * y)))
        .collect();
    let worst = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RateReport {
        kind,
        power,
        fitted_rate: worst,
        stderr: stats::std_error(&slopes),
        fit_stderr: None,
        window: prep.window(),
        n_paths_used: prep.paths.len(),
        n_exploded: prep.n_exploded,
        quantiles: QUANTILES.iter().map(|&q| (q, stats::quantile(&slopes, q))).collect(),
        series: prep.times.iter().copied().zip(Prepared::column_means(&rows)).collect(),
    })
}

/// Per-path slopes of `log |x(t)|^p` against `t`; reports the worst path.
pub fn estimate_as_rate(batch: &SimulationBatch, power: f64) -> Result<RateReport, EstimatorError> {
    estimate_as_rate_with(batch, power, &EstimatorOptions::default())
}

pub fn estimate_as_rate_with(
    batch: &SimulationBatch,
    power: f64,
    opts: &EstimatorOptions,
) -> Result<RateReport, EstimatorError> {
    per_path_slopes(batch, power, opts, RateKind::AlmostSureExponential)
}

/// Per-path slopes of `log |x(t)|^p` against `log(1 + t)`.
pub fn estimate_polynomial_rate(batch: &SimulationBatch, power: f64) -> Result<RateReport, EstimatorError> {
    estimate_polynomial_rate_with(batch, power, &EstimatorOptions::default())
}

pub fn estimate_polynomial_rate_with(
    batch: &SimulationBatch,
    power: f64,
    opts: &EstimatorOptions,
) -> Result<RateReport, EstimatorError> {
    per_path_slopes(batch, power, opts, RateKind::AlmostSurePolynomial)
}

/// `(t − t0)^{-1} ∫_{t0}^{t} E|x(s)|^p ds` by the trapezoid rule.
pub fn estimate_time_average(batch: &SimulationBatch, power: f64) -> Result<RateReport, EstimatorError> {
    estimate_time_average_with(batch, power, &EstimatorOptions::default())
}

pub fn estimate_time_average_with(
    batch: &SimulationBatch,
    power: f64,
    opts: &EstimatorOptions,
) -> Result<RateReport, EstimatorError> {
    let prep = prepare(batch, power, opts)?;
    let rows = prep.powers(power, opts.exec);
    let means = Prepared::column_means(&rows);
    let t = &prep.times;
    let mut series = Vec::with_capacity(t.len() - 1);
    let mut acc = 0.0;
    for k in 1..t.len() {
        acc += 0.5 * (t[k] - t[k - 1]) * (means[k] + means[k - 1]);
        series.push((t[k], acc / (t[k] - prep.t0)));
    }
    let span = prep.t_end - prep.t0;
    let per_path: Vec<f64> = rows.iter().map(|r| stats::trapezoid(t, r) / span).collect();
    Ok(RateReport {
        kind: RateKind::TimeAverage,
        power,
        fitted_rate: series.last().map_or(f64::NAN, |s| s.1),
        stderr: stats::std_error(&per_path),
        fit_stderr: None,
        window: (prep.t0, prep.t_end),
        n_paths_used: prep.paths.len(),
        n_exploded: prep.n_exploded,
        quantiles: Vec::new(),
        series,
    })
}

/// Dispatch on `kind`.
pub fn estimate(
    batch: &SimulationBatch,
    kind: RateKind,
    power: f64,
    opts: &EstimatorOptions,
) -> Result<RateReport, EstimatorError> {
    match kind {
        RateKind::MomentExponential => estimate_moment_rate_with(batch, power, opts),
        RateKind::AlmostSureExponential => estimate_as_rate_with(batch, power, opts),
        RateKind::TimeAverage => estimate_time_average_with(batch, power, opts),
        RateKind::AlmostSurePolynomial => estimate_polynomial_rate_with(batch, power, opts),
    }
}

//! The operator
//!
//! ```text
//! LV(φ, t, i) = V_t(φ(1), t, i) + V_x(φ(1), t, i) f(φ, t, i)
//!             + ½ trace(gᵀ V_xx(φ(1), t, i) g) + Σ_l γ_il V(φ(1), t, l)
//! ```
//!
//! for per-regime Lyapunov functions `V(x, t, i) = Σ c e^{ρt} |x|^p` with even
//! `p`, and the Itô martingale residual
//! `E V(x(T)) − E V(x(t0)) − E ∫ LV ds` that binds integrator, model and
//! operator together.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::SimulationBatch;
use crate::markov::Regime;
use crate::models::{ModelError, ModelSpec, Scratch};
use crate::parallel::{map_slice, Execution};
use crate::paths::{DensePath, Segment};
use crate::stats;

/// Minimum number of surviving paths for a residual estimate.
pub const MIN_RESIDUAL_PATHS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid Lyapunov family: {0}")]
    InvalidFamily(String),
    #[error("only {have} usable paths, need at least {need}")]
    InsufficientPaths { have: usize, need: usize },
    #[error("t_end = {t_end} is not a grid point inside [{t0}, {horizon}]")]
    BadHorizon { t_end: f64, t0: f64, horizon: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `c · e^{ρt} · |x|^p` with even `p ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coefficient: f64,
    pub power: u32,
    #[serde(default)]
    pub rate: f64,
}

impl PolyTerm {
    pub fn new(coefficient: f64, power: u32) -> Self {
        PolyTerm {
            coefficient,
            power,
            rate: 0.0,
        }
    }

    fn scale(&self, t: f64) -> f64 {
        if self.rate == 0.0 {
            self.coefficient
        } else {
            self.coefficient * (self.rate * t).exp()
        }
    }

    /// `c e^{ρt} r^p` from `r² = |x|²`.
    fn eval_r2(&self, r2: f64, t: f64) -> f64 {
        self.scale(t) * r2.powi(self.power as i32 / 2)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        self.eval_r2(sq(x), t)
    }
}

fn sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Per-regime `V(·, ·, i)` plus the comparison functions `U_0` and `U_1..U_M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovFamily {
    /// `regimes[i]` is `V(·, ·, i + 1)` as a sum of terms.
    pub regimes: Vec<Vec<PolyTerm>>,
    pub u0: PolyTerm,
    /// `U_1, …, U_M`.
    pub u: Vec<PolyTerm>,
}

/// One failed sandwich comparison `U_0 ≤ V ≤ U_1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichViolation {
    pub x: f64,
    pub regime: Regime,
    pub lower: f64,
    pub v: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichReport {
    pub holds: bool,
    pub violations: Vec<SandwichViolation>,
}

impl LyapunovFamily {
    pub fn new(regimes: Vec<Vec<PolyTerm>>, u0: PolyTerm, u: Vec<PolyTerm>) -> Result<Self, LyapunovError> {
        let fam = LyapunovFamily { regimes, u0, u };
        fam.validate()?;
        Ok(fam)
    }

    /// Even powers, non-negative coefficients, and `U_0` radially unbounded.
    pub fn validate(&self) -> Result<(), LyapunovError> {
        let terms = self
            .regimes
            .iter()
            .flatten()
            .chain(std::iter::once(&self.u0))
            .chain(&self.u);
        for t in terms {
            if t.power % 2 != 0 {
                return Err(LyapunovError::InvalidFamily(format!("odd power {}", t.power)));
            }
            if !(t.coefficient >= 0.0) || !t.rate.is_finite() {
                return Err(LyapunovError::InvalidFamily(format!("bad term {t:?}")));
            }
        }
        if self.regimes.is_empty() {
            return Err(LyapunovError::InvalidFamily("no regimes".into()));
        }
        if !(self.u0.coefficient > 0.0 && self.u0.power > 0) {
            return Err(LyapunovError::InvalidFamily(
                "U_0 must have a positive leading coefficient and positive power".into(),
            ));
        }
        Ok(())
    }

    pub fn n_regimes(&self) -> usize {
        self.regimes.len()
    }

    fn terms(&self, i: Regime) -> &[PolyTerm] {
        &self.regimes[i.index()]
    }

    pub fn eval(&self, x: &[f64], t: f64, i: Regime) -> f64 {
        let r2 = sq(x);
        self.terms(i).iter().map(|p| p.eval_r2(r2, t)).sum()
    }

    /// `∂V/∂t`.
    pub fn v_t(&self, x: &[f64], t: f64, i: Regime) -> f64 {
        let r2 = sq(x);
        self.terms(i).iter().map(|p| p.rate * p.eval_r2(r2, t)).sum()
    }

    /// `V_x = Σ c e^{ρt} p |x|^{p−2} x`.
    pub fn gradient(&self, x: &[f64], t: f64, i: Regime) -> Vec<f64> {
        let k = self.radial_first(sq(x), t, i);
        x.iter().map(|v| k * v).collect()
    }

    /// `V_xx = Σ c e^{ρt} p (|x|^{p−2} I + (p−2)|x|^{p−4} x xᵀ)`, row-major.
    pub fn hessian(&self, x: &[f64], t: f64, i: Regime) -> Vec<f64> {
        let n = x.len();
        let r2 = sq(x);
        let a = self.radial_first(r2, t, i);
        let b = self.radial_second(r2, t, i);
        let mut h = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                h[r * n + c] = b * x[r] * x[c] + if r == c { a } else { 0.0 };
            }
        }
        h
    }

    /// `Σ c e^{ρt} p |x|^{p−2}`.
    fn radial_first(&self, r2: f64, t: f64, i: Regime) -> f64 {
        self.terms(i)
            .iter()
            .filter(|p| p.power >= 2)
            .map(|p| p.scale(t) * p.power as f64 * r2.powi(p.power as i32 / 2 - 1))
            .sum()
    }

    /// `Σ c e^{ρt} p (p−2) |x|^{p−4}`.
    fn radial_second(&self, r2: f64, t: f64, i: Regime) -> f64 {
        self.terms(i)
            .iter()
            .filter(|p| p.power >= 4)
            .map(|p| p.scale(t) * (p.power * (p.power - 2)) as f64 * r2.powi(p.power as i32 / 2 - 2))
            .sum()
    }

    /// Spot-checks `U_0 ≤ V(·, ·, i) ≤ U_1` at the given points (time `t`).
    /// Reported, not enforced: the dissipation argument only uses `U_0 ≤ V`
    /// and many practical families have `V` above `U_1` for large `|x|`.
    pub fn check_sandwich(&self, xs: &[f64], t: f64) -> SandwichReport {
        let mut violations = Vec::new();
        for i in 0..self.n_regimes() {
            let regime = Regime::from_index(i);
            for &x in xs {
                let lower = self.u0.eval(&[x], t);
                let v = self.eval(&[x], t, regime);
                let upper = self.u.first().map_or(f64::INFINITY, |u| u.eval(&[x], t));
                let tol = 1e-12 * v.abs().max(1.0);
                if lower > v + tol || v > upper + tol {
                    violations.push(SandwichViolation {
                        x,
                        regime,
                        lower,
                        v,
                        upper,
                    });
                }
            }
        }
        SandwichReport {
            holds: violations.is_empty(),
            violations,
        }
    }
}

/// `LV` split into its four parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LVBreakdown {
    pub value: f64,
    /// `V_t`.
    pub time: f64,
    /// `V_x · f`.
    pub drift: f64,
    /// `½ trace(gᵀ V_xx g)`.
    pub diffusion: f64,
    /// `Σ_l γ_il V(·, l)`.
    pub switching: f64,
}

/// Buffers for repeated `LV` evaluation.
struct LvScratch {
    model: Scratch,
    x: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl LvScratch {
    fn new(m: &ModelSpec) -> Self {
        LvScratch {
            model: Scratch::new(m.dim),
            x: vec![0.0; m.dim],
            f: vec![0.0; m.dim],
            g: vec![0.0; m.dim * m.brownian_dim],
        }
    }
}

fn check_compatible(v: &LyapunovFamily, m: &ModelSpec) -> Result<(), LyapunovError> {
    if v.n_regimes() != m.n_regimes() {
        return Err(LyapunovError::DimensionMismatch(format!(
            "Lyapunov family has {} regimes, model has {}",
            v.n_regimes(),
            m.n_regimes()
        )));
    }
    Ok(())
}

fn lv_parts<S: Segment + ?Sized>(
    v: &LyapunovFamily,
    m: &ModelSpec,
    seg: &S,
    t: f64,
    i: Regime,
    s: &mut LvScratch,
) -> LVBreakdown {
    seg.value_into(1.0, &mut s.x);
    m.drift_into(seg, t, i, &mut s.model, &mut s.f);
    m.diffusion_into(seg, t, i, &mut s.model, &mut s.g);
    let x = &s.x;
    let r2 = sq(x);
    let time = v.v_t(x, t, i);
    let a = v.radial_first(r2, t, i);
    let drift = a * x.iter().zip(&s.f).map(|(p, q)| p * q).sum::<f64>();
    // trace(gᵀ (aI + b x xᵀ) g) = a‖g‖²_F + b‖gᵀx‖²
    let d = m.brownian_dim;
    let frob: f64 = s.g.iter().map(|v| v * v).sum();
    let mut diffusion = a * frob;
    let b = v.radial_second(r2, t, i);
    if b != 0.0 {
        let gtx: f64 = (0..d)
            .map(|c| {
                let col: f64 = (0..m.dim).map(|r| s.g[r * d + c] * x[r]).sum();
                col * col
            })
            .sum();
        diffusion += b * gtx;
    }
    diffusion *= 0.5;
    let switching: f64 = m
        .generator
        .row(i)
        .iter()
        .enumerate()
        .filter(|(_, &rate)| rate != 0.0)
        .map(|(l, &rate)| rate * v.eval(x, t, Regime::from_index(l)))
        .sum();
    LVBreakdown {
        value: time + drift + diffusion + switching,
        time,
        drift,
        diffusion,
        switching,
    }
}

/// `LV(φ, t, i)` with all four parts.
#[allow(non_snake_case)]
pub fn eval_LV<S: Segment + ?Sized>(
    v: &LyapunovFamily,
    m: &ModelSpec,
    seg: &S,
    t: f64,
    i: Regime,
) -> Result<LVBreakdown, LyapunovError> {
    check_compatible(v, m)?;
    if seg.dim() != m.dim {
        return Err(LyapunovError::DimensionMismatch(format!(
            "segment dimension {} vs model dimension {}",
            seg.dim(),
            m.dim
        )));
    }
    m.generator.check_regime(i).map_err(ModelError::from)?;
    Ok(lv_parts(v, m, seg, t, i, &mut LvScratch::new(m)))
}

/// Monte Carlo estimate of `E V(x(T)) − E V(x(t0)) − E ∫_{t0}^{T} LV ds`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub t_end: f64,
    pub residual: f64,
    pub stderr: f64,
    /// `residual / stderr` (0 when both vanish).
    pub z: f64,
    pub mean_delta_v: f64,
    /// `E ∫ LV ds`.
    pub mean_integral: f64,
    pub n_paths_used: usize,
    pub n_excluded: usize,
}

impl ResidualReport {
    /// `|residual|` after removing a weak-error allowance of
    /// `factor · dt · |E ∫ LV|`, in units of the standard error.
    pub fn adjusted_z(&self, dt: f64, factor: f64) -> f64 {
        let excess = (self.residual.abs() - factor * dt * self.mean_integral.abs()).max(0.0);
        if excess == 0.0 {
            0.0
        } else {
            excess / self.stderr
        }
    }

    /// `|z| ≤ 3` after a `5·dt·|E∫LV|` Euler–Maruyama bias allowance.
    pub fn passes(&self, dt: f64) -> bool {
        self.adjusted_z(dt, 5.0) <= 3.0
    }
}

/// Per-path `(ΔV, ∫ LV ds)` up to grid index `end`, trapezoid rule with the
/// interval's regime at both endpoints.
fn path_identity(v: &LyapunovFamily, m: &ModelSpec, path: &DensePath, end: usize, s: &mut LvScratch) -> (f64, f64) {
    let start = path.start_index();
    let times = path.times();
    let lv_at = |k: usize, i: Regime, s: &mut LvScratch| -> f64 {
        let seg = path.segment(times[k]).expect("grid point inside path");
        lv_parts(v, m, &seg, times[k], i, s).value
    };
    let mut integral = 0.0;
    let mut comp = 0.0;
    let mut left_regime = path.regime_at_index(start);
    let mut left = lv_at(start, left_regime, s);
    for k in start..end {
        let h = times[k + 1] - times[k];
        let right_regime = path.regime_at_index(k + 1);
        let right_same = lv_at(k + 1, left_regime, s);
        let piece = 0.5 * h * (left + right_same);
        // compensated accumulation over thousands of steps
        let y = piece - comp;
        let tot = integral + y;
        comp = (tot - integral) - y;
        integral = tot;
        left = if right_regime == left_regime {
            right_same
        } else {
            lv_at(k + 1, right_regime, s)
        };
        left_regime = right_regime;
    }
    let v0 = v.eval(path.value_at_index(start), times[start], path.regime_at_index(start));
    let v1 = v.eval(path.value_at_index(end), times[end], path.regime_at_index(end));
    (v1 - v0, integral)
}

/// Itô martingale residual at `t_end`. Paths that exploded at or before
/// `t_end` are excluded and counted.
pub fn martingale_residual(
    v: &LyapunovFamily,
    batch: &SimulationBatch,
    t_end: f64,
) -> Result<ResidualReport, LyapunovError> {
    martingale_residual_with(v, batch, t_end, Execution::default())
}

pub fn martingale_residual_with(
    v: &LyapunovFamily,
    batch: &SimulationBatch,
    t_end: f64,
    exec: Execution,
) -> Result<ResidualReport, LyapunovError> {
    let m = &batch.model;
    check_compatible(v, m)?;
    let t0 = m.t0;
    let horizon = batch.config.t_end;
    let tol = 1e-9 * t_end.abs().max(1.0);
    if !(t_end >= t0 && t_end <= horizon + tol) {
        return Err(LyapunovError::BadHorizon { t_end, t0, horizon });
    }
    let usable: Vec<&DensePath> = batch
        .paths()
        .iter()
        .filter(|p| p.exploded_at().is_none_or(|e| e > t_end))
        .collect();
    let excluded = batch.n_paths() - usable.len();
    if usable.len() < MIN_RESIDUAL_PATHS {
        return Err(LyapunovError::InsufficientPaths {
            have: usable.len(),
            need: MIN_RESIDUAL_PATHS,
        });
    }
    let per_path: Vec<Option<(f64, f64)>> = map_slice(&usable, exec, |p| {
        let times = p.times();
        let end = times.partition_point(|&s| s <= t_end + tol).checked_sub(1)?;
        if (times[end] - t_end).abs() > tol {
            return None;
        }
        let mut s = LvScratch::new(m);
        Some(path_identity(v, m, p, end, &mut s))
    });
    let per_path: Vec<(f64, f64)> = per_path
        .into_iter()
        .collect::<Option<_>>()
        .ok_or(LyapunovError::BadHorizon { t_end, t0, horizon })?;
    let delta: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let integral: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = per_path.iter().map(|p| p.0 - p.1).collect();
    let residual = stats::mean(&diffs);
    let stderr = stats::std_error(&diffs);
    let z = if residual == 0.0 { 0.0 } else { residual / stderr };
    Ok(ResidualReport {
        t_end,
        residual,
        stderr,
        z,
        mean_delta_v: stats::mean(&delta),
        mean_integral: stats::mean(&integral),
        n_paths_used: usable.len(),
        n_excluded: excluded,
    })
}

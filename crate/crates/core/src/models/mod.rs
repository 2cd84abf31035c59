//! Coefficients `f(φ, t, i)` and `g(φ, t, i)` built from structured terms.
//!
//! Every coefficient is a sum of
//!
//! * point terms `Σ c · φ(1)^p`, and
//! * pantograph terms `c · |φ(1)|^{m₁} ∫ K(θ, t) · F(φ(θ)) dν(θ)` where
//!   `K` is an optional decay kernel and `F(y) = |y|^{m₂}` (unsigned) or
//!   `F(y) = y |y|^{m₂ − 1}` (signed).
//!
//! Diffusion terms additionally name the Brownian column they drive, so
//! `g` is assembled as an `n × d` matrix.

mod measure;
mod probe;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use measure::{Kernel, KernelForm, Measure, MeasureRepr, DEFAULT_INTERVALS, MASS_TOLERANCE};
pub use probe::{validate_local_lipschitz_probe, LipschitzProbe};

use crate::markov::{GeneratorMatrix, MarkovError, Regime};
use crate::paths::{norm, InitialSegment, PathError, Segment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measure support [{lo}, {hi}] not inside [{theta_lower}, 1]")]
    UnsupportedMeasure { lo: f64, hi: f64, theta_lower: f64 },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// `c · x^p`.
///
/// Integer powers keep the sign of `x` (so `x³` is odd); non-integer powers
/// use the odd extension `sign(x) |x|^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coefficient: f64,
    pub power: f64,
}

impl Monomial {
    pub fn new(coefficient: f64, power: f64) -> Self {
        Monomial { coefficient, power }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficient * signed_pow(x, self.power)
    }
}

fn signed_pow(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
        x.powi(p as i32)
    } else {
        x.signum() * x.abs().powf(p)
    }
}

fn abs_pow(r: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == 1.0 {
        r
    } else if p == 2.0 {
        r * r
    } else {
        r.powf(p)
    }
}

/// `c · |φ(1)|^{m₁} ∫ K(θ, t) F(φ(θ)) dν(θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PantographTerm {
    pub coefficient: f64,
    pub measure: Measure,
    /// Absent means `K ≡ 1`.
    #[serde(default)]
    pub kernel: Option<Kernel>,
    #[serde(default)]
    pub point_exponent: f64,
    #[serde(default = "one")]
    pub delay_exponent: f64,
    /// `true`: `φ(θ)` enters with its sign; `false`: as `|φ(θ)|`.
    #[serde(default)]
    pub signed: bool,
}

fn one() -> f64 {
    1.0
}

impl PantographTerm {
    pub fn new(coefficient: f64, measure: Measure) -> Self {
        PantographTerm {
            coefficient,
            measure,
            kernel: None,
            point_exponent: 0.0,
            delay_exponent: 1.0,
            signed: false,
        }
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn with_point_exponent(mut self, m1: f64) -> Self {
        self.point_exponent = m1;
        self
    }

    pub fn with_delay_exponent(mut self, m2: f64) -> Self {
        self.delay_exponent = m2;
        self
    }

    pub fn signed(mut self) -> Self {
        self.signed = true;
        self
    }

    /// Adds the term's value to `out` (length `n`). `buf` is scratch of length `n`.
    fn accumulate<S: Segment + ?Sized>(&self, seg: &S, t: f64, current: &[f64], buf: &mut [f64], out: &mut [f64]) {
        let prefactor = self.coefficient * abs_pow(norm(current), self.point_exponent);
        if prefactor == 0.0 {
            return;
        }
        let m2 = self.delay_exponent;
        if self.signed {
            for &(theta, w) in self.measure.nodes() {
                let k = self.kernel.as_ref().map_or(1.0, |k| k.weight(theta, t));
                seg.value_into(theta, buf);
                let r = norm(buf);
                let shape = if m2 == 1.0 {
                    1.0
                } else if r == 0.0 {
                    0.0
                } else {
                    r.powf(m2 - 1.0)
                };
                let scale = prefactor * w * k * shape;
                for (o, y) in out.iter_mut().zip(buf.iter()) {
                    *o += scale * y;
                }
            }
        } else {
            let mut acc = 0.0;
            for &(theta, w) in self.measure.nodes() {
                let k = self.kernel.as_ref().map_or(1.0, |k| k.weight(theta, t));
                seg.value_into(theta, buf);
                acc += w * k * abs_pow(norm(buf), m2);
            }
            out[0] += prefactor * acc;
        }
    }
}

/// One additive piece of a drift or diffusion coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientTerm {
    /// `Σ c · φ(1)^p`, applied componentwise.
    Point {
        monomials: Vec<Monomial>,
    },
    Pantograph(PantographTerm),
}

impl CoefficientTerm {
    pub fn point(monomials: Vec<Monomial>) -> Self {
        CoefficientTerm::Point { monomials }
    }

    /// `c · φ(1)`.
    pub fn linear(c: f64) -> Self {
        CoefficientTerm::point(vec![Monomial::new(c, 1.0)])
    }

    fn validate(&self, dim: usize, theta_lower: f64) -> Result<(), ModelError> {
        match self {
            CoefficientTerm::Point { monomials } => {
                for m in monomials {
                    if !(m.power >= 0.0) || !m.coefficient.is_finite() {
                        return Err(ModelError::Invalid(format!("bad monomial {m:?}")));
                    }
                    if dim > 1 && m.power != 1.0 {
                        return Err(ModelError::DimensionMismatch(format!(
                            "power {} on a {dim}-dimensional state",
                            m.power
                        )));
                    }
                }
            }
            CoefficientTerm::Pantograph(p) => {
                if !(p.point_exponent >= 0.0 && p.delay_exponent >= 0.0) {
                    return Err(ModelError::Invalid("pantograph exponents must be non-negative".into()));
                }
                if !p.signed && dim > 1 {
                    return Err(ModelError::DimensionMismatch(
                        "unsigned pantograph terms are scalar-valued; state dimension is not 1".into(),
                    ));
                }
                let (lo, hi) = p.measure.support();
                if lo < theta_lower - 1e-15 || hi > 1.0 {
                    return Err(ModelError::UnsupportedMeasure { lo, hi, theta_lower });
                }
                if let Some(k) = &p.kernel {
                    k.validate(theta_lower)?;
                }
            }
        }
        Ok(())
    }

    fn accumulate<S: Segment + ?Sized>(&self, seg: &S, t: f64, current: &[f64], buf: &mut [f64], out: &mut [f64]) {
        match self {
            CoefficientTerm::Point { monomials } => {
                for (o, &x) in out.iter_mut().zip(current) {
                    *o += monomials.iter().map(|m| m.eval(x)).sum::<f64>();
                }
            }
            CoefficientTerm::Pantograph(p) => p.accumulate(seg, t, current, buf, out),
        }
    }
}

/// A diffusion term driving Brownian component `column` (0-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTerm {
    #[serde(default)]
    pub column: usize,
    pub term: CoefficientTerm,
}

impl From<CoefficientTerm> for DiffusionTerm {
    fn from(term: CoefficientTerm) -> Self {
        DiffusionTerm { column: 0, term }
    }
}

/// Full description of a hybrid pantograph SFDE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// State dimension `n`.
    pub dim: usize,
    /// Brownian dimension `d`.
    pub brownian_dim: usize,
    /// Lower end `θ̲ ∈ (0, 1)` of the segment.
    pub theta_lower: f64,
    /// Initial time, strictly positive.
    pub t0: f64,
    pub generator: GeneratorMatrix,
    /// Drift terms per regime (index 0 is regime 1).
    pub drift: Vec<Vec<CoefficientTerm>>,
    /// Diffusion terms per regime.
    pub diffusion: Vec<Vec<DiffusionTerm>>,
    pub initial_segment: InitialSegment,
}

/// Reusable buffers for coefficient evaluation.
#[derive(Clone, Debug)]
pub struct Scratch {
    current: Vec<f64>,
    buf: Vec<f64>,
    column: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch {
            current: vec![0.0; dim],
            buf: vec![0.0; dim],
            column: vec![0.0; dim],
        }
    }
}

impl ModelSpec {
    pub fn n_regimes(&self) -> usize {
        self.generator.n_states()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 || self.brownian_dim == 0 {
            return Err(ModelError::DimensionMismatch(
                "state and noise dimensions must be positive".into(),
            ));
        }
        if !(self.theta_lower > 0.0 && self.theta_lower < 1.0) {
            return Err(ModelError::Invalid(format!(
                "theta_lower {} not in (0, 1)",
                self.theta_lower
            )));
        }
        if !(self.t0 > 0.0) {
            return Err(ModelError::Invalid(format!("t0 = {} must be positive", self.t0)));
        }
        let n = self.n_regimes();
        if self.drift.len() != n || self.diffusion.len() != n {
            return Err(ModelError::Invalid(format!(
                "{n} regimes but {} drift and {} diffusion lists",
                self.drift.len(),
                self.diffusion.len()
            )));
        }
        for terms in &self.drift {
            for t in terms {
                t.validate(self.dim, self.theta_lower)?;
            }
        }
        for terms in &self.diffusion {
            for t in terms {
                if t.column >= self.brownian_dim {
                    return Err(ModelError::DimensionMismatch(format!(
                        "diffusion column {} with brownian_dim {}",
                        t.column, self.brownian_dim
                    )));
                }
                t.term.validate(self.dim, self.theta_lower)?;
            }
        }
        self.initial_segment
            .validate(self.dim, self.theta_lower * self.t0, self.t0)?;
        Ok(())
    }

    fn check_call<S: Segment + ?Sized>(&self, seg: &S, regime: Regime) -> Result<(), ModelError> {
        if seg.dim() != self.dim {
            return Err(ModelError::DimensionMismatch(format!(
                "segment dimension {} vs model dimension {}",
                seg.dim(),
                self.dim
            )));
        }
        self.generator.check_regime(regime)?;
        Ok(())
    }

    /// `f(φ, t, i)` into `out`, without argument checks.
    pub fn drift_into<S: Segment + ?Sized>(
        &self,
        seg: &S,
        t: f64,
        regime: Regime,
        scratch: &mut Scratch,
        out: &mut [f64],
    ) {
        out.iter_mut().for_each(|o| *o = 0.0);
        seg.value_into(1.0, &mut scratch.current);
        for term in &self.drift[regime.index()] {
            term.accumulate(seg, t, &scratch.current, &mut scratch.buf, out);
        }
    }

    /// `g(φ, t, i)` into `out`, row-major `n × d`, without argument checks.
    pub fn diffusion_into<S: Segment + ?Sized>(
        &self,
        seg: &S,
        t: f64,
        regime: Regime,
        scratch: &mut Scratch,
        out: &mut [f64],
    ) {
        out.iter_mut().for_each(|o| *o = 0.0);
        seg.value_into(1.0, &mut scratch.current);
        let d = self.brownian_dim;
        for dt in &self.diffusion[regime.index()] {
            scratch.column.iter_mut().for_each(|c| *c = 0.0);
            dt.term
                .accumulate(seg, t, &scratch.current, &mut scratch.buf, &mut scratch.column);
            for (row, v) in scratch.column.iter().enumerate() {
                out[row * d + dt.column] += v;
            }
        }
    }

    /// Drift vector `f(φ, t, i)`.
    pub fn eval_drift<S: Segment + ?Sized>(&self, seg: &S, t: f64, regime: Regime) -> Result<Vec<f64>, ModelError> {
        self.check_call(seg, regime)?;
        let mut out = vec![0.0; self.dim];
        self.drift_into(seg, t, regime, &mut Scratch::new(self.dim), &mut out);
        Ok(out)
    }

    /// Diffusion matrix `g(φ, t, i)` of shape `n × d`.
    pub fn eval_diffusion<S: Segment + ?Sized>(
        &self,
        seg: &S,
        t: f64,
        regime: Regime,
    ) -> Result<DMatrix<f64>, ModelError> {
        self.check_call(seg, regime)?;
        let mut out = vec![0.0; self.dim * self.brownian_dim];
        self.diffusion_into(seg, t, regime, &mut Scratch::new(self.dim), &mut out);
        Ok(DMatrix::from_row_slice(self.dim, self.brownian_dim, &out))
    }

    /// The single-regime model obtained by freezing regime `regime`.
    pub fn isolate_regime(&self, regime: Regime) -> Result<ModelSpec, ModelError> {
        self.generator.check_regime(regime)?;
        Ok(ModelSpec {
            generator: GeneratorMatrix::single_state(),
            drift: vec![self.drift[regime.index()].clone()],
            diffusion: vec![self.diffusion[regime.index()].clone()],
            ..self.clone()
        })
    }

    /// Same model started from a different `ξ`.
    pub fn with_initial_segment(mut self, xi: InitialSegment) -> Self {
        self.initial_segment = xi;
        self
    }
}

/// Built-in model `name` with delay measure `nu`.
pub fn preset(name: crate::presets::Preset, nu: &Measure) -> Result<ModelSpec, ModelError> {
    name.model(nu)
}

//! Arithmetic checks of the dissipation hypotheses.
//!
//! The data are the constants of a bound of the form
//!
//! ```text
//! LV ≤ a0 + Σ_k [ −a_k U_k(φ(1)) + Σ_l b_kl ∫ K U_k(φ(1))^{α_kl} U_k(φ(θ))^{1−α_kl} dν_k ]
//! ```
//!
//! with an optional kernel rate `β` (present for the kernel form, absent when
//! `K ≡ 1`). All checks are closed-form except the polynomial rate, which
//! is found by bisection on a feasibility predicate that is monotone in `ε`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Margin by which strict inequalities are enforced numerically.
pub const STRICTNESS: f64 = 1e-9;
/// Absolute bisection tolerance of the polynomial solver.
pub const BISECTION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("invalid certificate data: {0}")]
    Invalid(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("no positive rate satisfies the constraints")]
    Infeasible,
    #[error("epsilon must be positive")]
    ZeroEpsilon,
    #[error("denominator {0} is not positive")]
    NonPositiveDenominator(f64),
    #[error("family index {k} out of range 1..={m}")]
    NoSuchFamily { k: usize, m: usize },
}

/// One `b_kl · U^{α} U(θ)^{1−α}` term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTerm {
    pub b: f64,
    pub alpha: f64,
}

impl CrossTerm {
    pub fn new(b: f64, alpha: f64) -> Self {
        CrossTerm { b, alpha }
    }
}

/// Constants for one comparison function `U_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub a: f64,
    #[serde(default)]
    pub terms: Vec<CrossTerm>,
    /// `U_k = |x|^p`; informational.
    #[serde(default)]
    pub power: Option<u32>,
}

impl Family {
    pub fn new(a: f64, terms: Vec<CrossTerm>) -> Self {
        Family { a, terms, power: None }
    }

    pub fn with_power(mut self, p: u32) -> Self {
        self.power = Some(p);
        self
    }

    /// `(Σ b α, Σ b (1 − α))`.
    fn sums(&self) -> (f64, f64) {
        self.terms
            .iter()
            .fold((0.0, 0.0), |(s, r), t| (s + t.b * t.alpha, r + t.b * (1.0 - t.alpha)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateData {
    #[serde(default)]
    pub a0: f64,
    /// `U_1, …, U_M`.
    pub families: Vec<Family>,
    pub theta_lower: f64,
    /// Kernel rate; `None` for the kernel-free form.
    #[serde(default)]
    pub beta: Option<f64>,
    pub t0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Existence,
    Exponential,
    Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateVerdict {
    pub kind: CertificateKind,
    pub holds: bool,
    /// Per family, the value of the checked left-hand side.
    pub margins: Vec<f64>,
    /// Certified rate (already reduced by [`STRICTNESS`]).
    pub epsilon: Option<f64>,
    /// Supremum of admissible rates before the strictness margin.
    pub supremum: Option<f64>,
    /// The instantiated inequalities.
    pub detail: Vec<String>,
    pub notes: Vec<String>,
}

impl CertificateData {
    pub fn validate(&self) -> Result<(), CertificateError> {
        let bad = |msg: String| Err(CertificateError::Invalid(msg));
        if self.families.is_empty() {
            return bad("at least one family U_k is required".into());
        }
        if !(self.theta_lower > 0.0 && self.theta_lower < 1.0) {
            return bad(format!("theta_lower {} not in (0, 1)", self.theta_lower));
        }
        if !(self.a0 >= 0.0) || !(self.t0 > 0.0) {
            return bad("a0 must be non-negative and t0 positive".into());
        }
        for (k, f) in self.families.iter().enumerate() {
            if !(f.a >= 0.0) {
                return bad(format!("a_{} = {} is negative", k + 1, f.a));
            }
            for t in &f.terms {
                if !(t.b >= 0.0) || !(0.0..=1.0).contains(&t.alpha) {
                    return bad(format!(
                        "family {}: b = {}, alpha = {} out of range",
                        k + 1,
                        t.b,
                        t.alpha
                    ));
                }
            }
        }
        if let Some(beta) = self.beta {
            let a1 = self.families[0].a;
            if !(beta > 0.0 && beta < a1) {
                return bad(format!("need 0 < beta < a_1, got beta = {beta}, a_1 = {a1}"));
            }
        }
        Ok(())
    }

    pub fn n_families(&self) -> usize {
        self.families.len()
    }

    /// `−a_k + Σ b α + c Σ b (1 − α)` for a delay factor `c`.
    fn lhs(&self, k: usize, delay_factor: f64) -> f64 {
        let f = &self.families[k];
        let (s, r) = f.sums();
        -f.a + s + delay_factor * r
    }

    /// `−a_k + Σ b α + (1/θ̲) Σ b (1 − α)`.
    pub fn existence_margin(&self, k: usize) -> f64 {
        self.lhs(k, 1.0 / self.theta_lower)
    }

    /// Left-hand sides of the polynomial-rate constraints at `ε`; the first
    /// one includes the `+ε`.
    pub fn polynomial_constraints(&self, eps: f64) -> Vec<f64> {
        let c = self.theta_lower.powf(-(1.0 + eps));
        (0..self.n_families())
            .map(|k| self.lhs(k, c) + if k == 0 { eps } else { 0.0 })
            .collect()
    }

    fn render(&self, k: usize, factor: &str, extra: &str, value: f64, rel: &str) -> String {
        let f = &self.families[k];
        let mut s = format!("k={}: {extra}-{}", k + 1, f.a);
        for t in &f.terms {
            s.push_str(&format!(" + {}*{}", t.b, t.alpha));
        }
        for t in &f.terms {
            s.push_str(&format!(" + {}*{factor}*(1-{})", t.b, t.alpha));
        }
        s.push_str(&format!(" = {value} {rel} 0"));
        s
    }
}

/// Global existence: every `margin_k ≤ 0`.
pub fn check_existence(c: &CertificateData) -> Result<CertificateVerdict, CertificateError> {
    c.validate()?;
    let factor = format!("(1/{})", c.theta_lower);
    let margins: Vec<f64> = (0..c.n_families()).map(|k| c.existence_margin(k)).collect();
    let detail = margins
        .iter()
        .enumerate()
        .map(|(k, &m)| c.render(k, &factor, "", m, "<="))
        .collect();
    Ok(CertificateVerdict {
        kind: CertificateKind::Existence,
        holds: margins.iter().all(|&m| m <= 0.0),
        margins,
        epsilon: None,
        supremum: None,
        detail,
        notes: Vec::new(),
    })
}

/// `0 < ε ≤ β` and `a_1 − ε − Σ b_1l α_1l − (1/θ̲) Σ b_1l (1 − α_1l) > 0`.
pub fn check_epsilon_exponential(c: &CertificateData, eps: f64) -> bool {
    match c.beta {
        Some(beta) => eps > 0.0 && eps <= beta && -c.existence_margin(0) - eps > 0.0,
        None => false,
    }
}

/// Best exponential rate: `ε = min(β, sup − δ)` with
/// `sup = a_1 − Σ b_1l α_1l − (1/θ̲) Σ b_1l (1 − α_1l)`.
///
/// Requires `β` and the strict condition `margin_k < 0` for every `k`.
pub fn solve_epsilon_exponential(c: &CertificateData) -> Result<CertificateVerdict, CertificateError> {
    c.validate()?;
    let beta = c
        .beta
        .ok_or_else(|| CertificateError::NotApplicable("the exponential rate needs a kernel rate beta".into()))?;
    let margins: Vec<f64> = (0..c.n_families()).map(|k| c.existence_margin(k)).collect();
    if let Some(k) = margins.iter().position(|&m| !(m < 0.0)) {
        return Err(CertificateError::NotApplicable(format!(
            "stability condition fails for k = {}: margin {}",
            k + 1,
            margins[k]
        )));
    }
    let sup = -margins[0];
    let eps = beta.min(sup - STRICTNESS);
    let factor = format!("(1/{})", c.theta_lower);
    let mut detail: Vec<String> = margins
        .iter()
        .enumerate()
        .map(|(k, &m)| c.render(k, &factor, "", m, "<"))
        .collect();
    detail.push(format!("eps = min(beta = {beta}, {sup} - {STRICTNESS}) = {eps}"));
    let holds = eps > 0.0;
    Ok(CertificateVerdict {
        kind: CertificateKind::Exponential,
        holds,
        margins,
        epsilon: holds.then_some(eps),
        supremum: Some(sup.min(beta)),
        detail,
        notes: Vec::new(),
    })
}

/// `limsup E U_0 ≤ a0 / ε`.
pub fn moment_bound(c: &CertificateData, eps: f64) -> Result<f64, CertificateError> {
    if !(eps > 0.0) {
        return Err(CertificateError::ZeroEpsilon);
    }
    Ok(c.a0 / eps)
}

/// `a0 / (a_k − e^{−β(1−θ̲)t0} Σ b α − (1/θ̲) e^{−β(1−θ̲)t0} Σ b (1 − α))`
/// for `k = 1..M`; `β` is taken as 0 when absent.
pub fn time_average_bound(c: &CertificateData, k: usize) -> Result<f64, CertificateError> {
    c.validate()?;
    if k == 0 || k > c.n_families() {
        return Err(CertificateError::NoSuchFamily { k, m: c.n_families() });
    }
    let beta = c.beta.unwrap_or(0.0);
    let decay = (-beta * (1.0 - c.theta_lower) * c.t0).exp();
    let f = &c.families[k - 1];
    let (s, r) = f.sums();
    let denom = f.a - decay * s - decay * r / c.theta_lower;
    if !(denom > 0.0) {
        return Err(CertificateError::NonPositiveDenominator(denom));
    }
    Ok(c.a0 / denom)
}

/// `true` iff every polynomial-rate constraint is strictly negative at `ε`.
pub fn check_epsilon_polynomial(c: &CertificateData, eps: f64) -> bool {
    eps > 0.0 && c.polynomial_constraints(eps).iter().all(|&v| v < 0.0)
}

/// Largest polynomial rate, by bisection on `[0, a_1]`.
///
/// Every constraint is increasing in `ε` (`θ̲^{−(1+ε)}` grows since
/// `θ̲ < 1`), so the feasible set is an interval starting at 0.
pub fn solve_epsilon_polynomial(c: &CertificateData) -> Result<CertificateVerdict, CertificateError> {
    c.validate()?;
    if c.a0 != 0.0 {
        return Err(CertificateError::NotApplicable(
            "the polynomial rate needs a0 = 0".into(),
        ));
    }
    let feasible = |eps: f64| c.polynomial_constraints(eps).iter().all(|&v| v < 0.0);
    if !feasible(0.0) {
        return Err(CertificateError::Infeasible);
    }
    let (mut lo, mut hi) = (0.0, c.families[0].a);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eps = lo - STRICTNESS;
    if !(eps > 0.0) {
        return Err(CertificateError::Infeasible);
    }
    let margins = c.polynomial_constraints(eps);
    let factor = format!("{}^(-(1+{eps}))", c.theta_lower);
    let detail = margins
        .iter()
        .enumerate()
        .map(|(k, &m)| c.render(k, &factor, if k == 0 { "eps " } else { "" }, m, "<"))
        .collect();
    let mut notes = Vec::new();
    if let Some(beta) = c.beta {
        notes.push(format!(
            "beta = {beta} supplied but ignored: the polynomial rate does not use the kernel"
        ));
    }
    Ok(CertificateVerdict {
        kind: CertificateKind::Polynomial,
        holds: true,
        margins,
        epsilon: Some(eps),
        supremum: Some(lo),
        detail,
        notes,
    })
}

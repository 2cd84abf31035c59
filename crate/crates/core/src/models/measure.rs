//! Probability measures `ν` on `[θ̲, 1]` and decay kernels `e^{-∫λ}`.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Tolerance on total mass.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Default number of quadrature subintervals per density piece.
pub const DEFAULT_INTERVALS: usize = 64;

/// A probability measure on `(0, 1]`, either a finite sum of atoms or a
/// piecewise-constant density.
///
/// Integrals are evaluated through a fixed list of weighted nodes: the atoms
/// themselves (exact), or composite Simpson nodes on each density piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct Measure {
    repr: MeasureRepr,
    nodes: Vec<(f64, f64)>,
}

/// Serialised form of a [`Measure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureRepr {
    /// `(θ_j, w_j)` pairs.
    Atoms(Vec<(f64, f64)>),
    /// Density `values[j]` on `[breakpoints[j], breakpoints[j + 1])`.
    Density {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        #[serde(default = "default_intervals")]
        intervals: usize,
    },
}

fn default_intervals() -> usize {
    DEFAULT_INTERVALS
}

impl Measure {
    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        Self::try_from(MeasureRepr::Atoms(atoms))
    }

    /// Unit mass at `θ`.
    pub fn dirac(theta: f64) -> Result<Self, ModelError> {
        Self::atoms(vec![(theta, 1.0)])
    }

    pub fn density(breakpoints: Vec<f64>, values: Vec<f64>, intervals: usize) -> Result<Self, ModelError> {
        Self::try_from(MeasureRepr::Density {
            breakpoints,
            values,
            intervals,
        })
    }

    /// Uniform law on `[a, b]`.
    pub fn uniform(a: f64, b: f64) -> Result<Self, ModelError> {
        Self::density(vec![a, b], vec![1.0 / (b - a)], DEFAULT_INTERVALS)
    }

    pub fn repr(&self) -> &MeasureRepr {
        &self.repr
    }

    /// Weighted quadrature nodes `(θ, w)`, sorted by `θ`.
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.repr, MeasureRepr::Atoms(_))
    }

    /// Smallest and largest point of the support.
    pub fn support(&self) -> (f64, f64) {
        match &self.repr {
            MeasureRepr::Atoms(a) => {
                let pos = a.iter().filter(|(_, w)| *w > 0.0).map(|(t, _)| *t);
                let lo = pos.clone().fold(f64::INFINITY, f64::min);
                let hi = pos.fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            MeasureRepr::Density { breakpoints, .. } => (breakpoints[0], *breakpoints.last().unwrap()),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.repr {
            MeasureRepr::Atoms(a) => a.iter().map(|(_, w)| w).sum(),
            MeasureRepr::Density {
                breakpoints, values, ..
            } => breakpoints.windows(2).zip(values).map(|(b, v)| (b[1] - b[0]) * v).sum(),
        }
    }

    /// `∫ h dν` by the node rule.
    pub fn integrate(&self, mut h: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(t, w)| w * h(t)).sum()
    }

    /// The same measure with its density quadrature refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        match &self.repr {
            MeasureRepr::Atoms(_) => self.clone(),
            MeasureRepr::Density {
                breakpoints,
                values,
                intervals,
            } => Measure::density(breakpoints.clone(), values.clone(), intervals * factor)
                .expect("refinement keeps a valid measure"),
        }
    }
}

fn simpson_nodes(breakpoints: &[f64], values: &[f64], intervals: usize) -> Vec<(f64, f64)> {
    // Simpson needs an even number of subintervals
    let m = intervals.max(2) + intervals % 2;
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    for (b, &rho) in breakpoints.windows(2).zip(values) {
        let (a, c) = (b[0], b[1]);
        let h = (c - a) / m as f64;
        for k in 0..=m {
            let theta = if k == m { c } else { a + h * k as f64 };
            let coef = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let w = rho * h / 3.0 * coef;
            match nodes.last_mut() {
                Some(last) if last.0 == theta => last.1 += w,
                _ => nodes.push((theta, w)),
            }
        }
    }
    nodes.retain(|&(_, w)| w != 0.0);
    nodes
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = ModelError;

    fn try_from(repr: MeasureRepr) -> Result<Self, Self::Error> {
        let invalid = |msg: String| Err(ModelError::InvalidMeasure(msg));
        let nodes = match &repr {
            MeasureRepr::Atoms(atoms) => {
                if atoms.is_empty() {
                    return invalid("measure has no atoms".into());
                }
                for &(t, w) in atoms {
                    if !(t > 0.0 && t <= 1.0) {
                        return invalid(format!("atom at {t} outside (0, 1]"));
                    }
                    if !(w >= 0.0) {
                        return invalid(format!("negative atom weight {w}"));
                    }
                }
                let mut nodes = atoms.clone();
                nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
                nodes
            }
            MeasureRepr::Density {
                breakpoints,
                values,
                intervals,
            } => {
                if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
                    return invalid("density needs k+1 breakpoints for k values".into());
                }
                if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
                    return invalid("density breakpoints must increase".into());
                }
                if !(breakpoints[0] > 0.0 && *breakpoints.last().unwrap() <= 1.0) {
                    return invalid("density support must lie in (0, 1]".into());
                }
                if values.iter().any(|v| !(*v >= 0.0)) {
                    return invalid("density values must be non-negative".into());
                }
                if *intervals == 0 {
                    return invalid("quadrature needs at least one interval".into());
                }
                simpson_nodes(breakpoints, values, *intervals)
            }
        };
        let m = Measure { repr, nodes };
        let mass = m.total_mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(ModelError::InvalidMeasure(format!("total mass {mass} is not 1")));
        }
        Ok(m)
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        m.repr
    }
}

/// Rate function `λ(θ, u) ≥ 0` behind the kernel `exp(-∫₀ᵗ λ(θ, u) du)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum KernelForm {
    /// `λ(θ, u) = scale · (1 − θ)`.
    Linear { scale: f64 },
    /// `λ(θ, u) = scale · (1 − θ) + amplitude · e^{−decay · u}`, `decay > 0`.
    LinearWithTransient { scale: f64, amplitude: f64, decay: f64 },
}

/// Decay kernel with its certified lower rate `β`: `inf_u λ(θ, u) ≥ β (1 − θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub beta: f64,
    #[serde(flatten)]
    pub form: KernelForm,
}

impl Kernel {
    /// `λ(θ, u) = β (1 − θ)`, the form used by the built-in examples.
    pub fn linear(beta: f64) -> Self {
        Kernel {
            beta,
            form: KernelForm::Linear { scale: beta },
        }
    }

    pub fn lambda_at(&self, theta: f64, u: f64) -> f64 {
        match self.form {
            KernelForm::Linear { scale } => scale * (1.0 - theta),
            KernelForm::LinearWithTransient {
                scale,
                amplitude,
                decay,
            } => scale * (1.0 - theta) + amplitude * (-decay * u).exp(),
        }
    }

    /// `∫₀ᵗ λ(θ, u) du` in closed form.
    pub fn cumulative_rate(&self, theta: f64, t: f64) -> f64 {
        match self.form {
            KernelForm::Linear { scale } => scale * (1.0 - theta) * t,
            KernelForm::LinearWithTransient {
                scale,
                amplitude,
                decay,
            } => scale * (1.0 - theta) * t + amplitude * (1.0 - (-decay * t).exp()) / decay,
        }
    }

    /// `exp(-∫₀ᵗ λ(θ, u) du)`.
    pub fn weight(&self, theta: f64, t: f64) -> f64 {
        (-self.cumulative_rate(theta, t)).exp()
    }

    /// Spot-checks `λ ≥ 0` and `λ(θ, u) ≥ β(1 − θ)` on a grid of `θ ∈ [θ̲, 1]`
    /// and `u ∈ [0, 10⁴]`.
    pub fn validate(&self, theta_lower: f64) -> Result<(), ModelError> {
        if !(self.beta >= 0.0) {
            return Err(ModelError::InvalidKernel(format!(
                "beta {} must be non-negative",
                self.beta
            )));
        }
        if let KernelForm::LinearWithTransient { decay, .. } = self.form {
            if !(decay > 0.0) {
                return Err(ModelError::InvalidKernel("transient decay must be positive".into()));
            }
        }
        let us = std::iter::once(0.0).chain((0..=40).map(|k| 10f64.powf(-3.0 + 7.0 * k as f64 / 40.0)));
        for u in us {
            for k in 0..=20 {
                let theta = theta_lower + (1.0 - theta_lower) * k as f64 / 20.0;
                let lambda = self.lambda_at(theta, u);
                let floor = self.beta * (1.0 - theta);
                if lambda < -1e-12 || lambda < floor - 1e-12 {
                    return Err(ModelError::InvalidKernel(format!(
                        "λ({theta}, {u}) = {lambda} below β(1−θ) = {floor}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_and_density_mass() {
        assert!(Measure::dirac(1.0).is_ok());
        assert!(Measure::atoms(vec![(0.5, 0.4), (1.0, 0.5)]).is_err());
        assert!(Measure::atoms(vec![(1.2, 1.0)]).is_err());
        let u = Measure::uniform(0.5, 1.0).unwrap();
        let mass: f64 = u.nodes().iter().map(|n| n.1).sum();
        assert!((mass - 1.0).abs() < 1e-13);
        assert!(Measure::density(vec![0.5, 1.0], vec![1.0], 64).is_err());
    }

    #[test]
    fn atoms_are_exact() {
        let m = Measure::atoms(vec![(0.5, 0.25), (0.8, 0.75)]).unwrap();
        let v = m.integrate(|t| t * t);
        assert_eq!(v, 0.25 * (0.5 * 0.5) + 0.75 * (0.8 * 0.8));
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let m = Measure::density(vec![0.5, 0.75, 1.0], vec![1.0, 3.0], 4).unwrap();
        let exact = |a: f64, b: f64| (b.powi(4) - a.powi(4)) / 4.0;
        let expected = exact(0.5, 0.75) + 3.0 * exact(0.75, 1.0);
        assert!((m.integrate(|t| t.powi(3)) - expected).abs() < 1e-14);
    }

    #[test]
    fn odd_interval_counts_are_rounded_up() {
        let m = Measure::density(vec![0.5, 1.0], vec![2.0], 3).unwrap();
        assert_eq!(m.nodes().len(), 5);
    }

    #[test]
    fn refinement_changes_smooth_integral_little() {
        // the preset integrands at t near t0
        for (lo, beta) in [(0.5, 0.5), (0.7, 0.6)] {
            let m = Measure::uniform(lo, 1.0).unwrap();
            let k = Kernel::linear(beta);
            for t in [1.0, 2.0, 5.0] {
                let coarse = m.integrate(|th| k.weight(th, t) * (1.0 + th * t));
                let fine = m.refined(2).integrate(|th| k.weight(th, t) * (1.0 + th * t));
                assert!((coarse - fine).abs() < 1e-8, "t={t}: {coarse} vs {fine}");
            }
        }
    }

    #[test]
    fn kernel_validation() {
        let k = Kernel::linear(0.5);
        assert!(k.validate(0.5).is_ok());
        assert_eq!(k.weight(1.0, 100.0), 1.0);
        assert!((k.weight(0.5, 2.0) - (-0.5f64).exp()).abs() < 1e-15);

        let too_slow = Kernel {
            beta: 0.5,
            form: KernelForm::Linear { scale: 0.4 },
        };
        assert!(too_slow.validate(0.5).is_err());

        let transient = Kernel {
            beta: 0.5,
            form: KernelForm::LinearWithTransient {
                scale: 0.5,
                amplitude: 1.0,
                decay: 2.0,
            },
        };
        assert!(transient.validate(0.5).is_ok());
        let numeric: f64 = (0..20000)
            .map(|k| {
                let u = (k as f64 + 0.5) * 3.0 / 20000.0;
                transient.lambda_at(0.6, u) * 3.0 / 20000.0
            })
            .sum();
        assert!((numeric - transient.cumulative_rate(0.6, 3.0)).abs() < 1e-8);

        let negative = Kernel {
            beta: 0.5,
            form: KernelForm::LinearWithTransient {
                scale: 0.5,
                amplitude: -0.1,
                decay: 1.0,
            },
        };
        assert!(negative.validate(0.5).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let m = Measure::uniform(0.5, 1.0).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: Measure = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let atoms: Measure = serde_json::from_str(r#"{"atoms": [[1.0, 1.0]]}"#).unwrap();
        assert!(atoms.is_atomic());
        let k: Kernel = serde_json::from_str(r#"{"beta": 0.5, "form": "linear", "scale": 0.5}"#).unwrap();
        assert_eq!(k, Kernel::linear(0.5));
    }
}

//! Built-in two-regime scalar models with their Lyapunov families and
//! certificate constants.
//!
//! | preset        | θ̲    | Γ                  | kernel rate β |
//! |---------------|------|--------------------|---------------|
//! | `example_3_4` | 0.5  | `[[-1,1],[2,-2]]`  | 0.5           |
//! | `example_3_5` | 0.7  | `[[-1,1],[3,-3]]`  | 0.6           |
//! | `example_3_7` | 0.75 | `[[-1,1],[4,-4]]`  | none          |
//!
//! In the last two, regime 2 only looks at `φ(1)` (`ν₂ = δ₁`), which turns
//! it into an unstable geometric Brownian motion on its own.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::certificates::{CertificateData, CrossTerm, Family};
use crate::lyapunov::{LyapunovFamily, PolyTerm};
use crate::markov::{GeneratorMatrix, Regime};
use crate::models::{CoefficientTerm, Kernel, Measure, ModelError, ModelSpec, Monomial, PantographTerm};
use crate::paths::InitialSegment;

pub const DEFAULT_T0: f64 = 1.0;
pub const DEFAULT_XI: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "example_3_4")]
    Example34,
    #[serde(rename = "example_3_5")]
    Example35,
    #[serde(rename = "example_3_7")]
    Example37,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

fn mono(c: f64, p: f64) -> Monomial {
    Monomial::new(c, p)
}

fn pg(c: f64, nu: &Measure) -> PantographTerm {
    PantographTerm::new(c, nu.clone())
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Example34, Preset::Example35, Preset::Example37];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Example34 => "example_3_4",
            Preset::Example35 => "example_3_5",
            Preset::Example37 => "example_3_7",
        }
    }

    pub fn theta_lower(self) -> f64 {
        match self {
            Preset::Example34 => 0.5,
            Preset::Example35 => 0.7,
            Preset::Example37 => 0.75,
        }
    }

    pub fn beta(self) -> Option<f64> {
        match self {
            Preset::Example34 => Some(0.5),
            Preset::Example35 => Some(0.6),
            Preset::Example37 => None,
        }
    }

    pub fn kernel(self) -> Option<Kernel> {
        self.beta().map(Kernel::linear)
    }

    pub fn generator(self) -> GeneratorMatrix {
        let back = match self {
            Preset::Example34 => 2.0,
            Preset::Example35 => 3.0,
            Preset::Example37 => 4.0,
        };
        GeneratorMatrix::new(vec![vec![-1.0, 1.0], vec![back, -back]]).expect("valid preset generator")
    }

    /// Two equal atoms at `θ̲` and `(1 + θ̲)/2`: cheap to evaluate while still
    /// reaching into the pantograph memory.
    pub fn default_measure(self) -> Measure {
        let lo = self.theta_lower();
        Measure::atoms(vec![(lo, 0.5), (0.5 * (1.0 + lo), 0.5)]).expect("valid default measure")
    }

    pub fn default_initial_regime(self) -> Regime {
        Regime::new(1)
    }

    /// The model with `nu` as the delay measure (`ν` for `example_3_4`,
    /// `ν₁` for the others) and `ξ ≡ 0.5`, `t0 = 1`.
    pub fn model(self, nu: &Measure) -> Result<ModelSpec, ModelError> {
        let theta_lower = self.theta_lower();
        let (lo, hi) = nu.support();
        if lo < theta_lower || hi > 1.0 {
            return Err(ModelError::UnsupportedMeasure { lo, hi, theta_lower });
        }
        let k = self.kernel();
        let with_k = |t: PantographTerm| match &k {
            Some(k) => t.with_kernel(k.clone()),
            None => t,
        };
        let delta1 = Measure::dirac(1.0)?;
        let (drift, diffusion) = match self {
            Preset::Example34 => (
                vec![
                    vec![
                        CoefficientTerm::point(vec![mono(-5.0, 1.0), mono(-5.0, 3.0), mono(-5.0, 5.0)]),
                        CoefficientTerm::Pantograph(with_k(pg(0.5, nu))),
                    ],
                    vec![
                        CoefficientTerm::linear(0.05),
                        CoefficientTerm::Pantograph(with_k(pg(0.05, nu))),
                    ],
                ],
                vec![
                    vec![CoefficientTerm::Pantograph(with_k(pg(0.5, nu).with_point_exponent(2.0))).into()],
                    vec![CoefficientTerm::Pantograph(with_k(pg(0.2, nu))).into()],
                ],
            ),
            Preset::Example35 => (
                vec![
                    vec![
                        CoefficientTerm::point(vec![mono(-6.0, 1.0), mono(-6.0, 3.0), mono(-6.0, 7.0)]),
                        CoefficientTerm::Pantograph(with_k(pg(1.0, nu).signed())),
                    ],
                    vec![
                        CoefficientTerm::linear(0.04),
                        CoefficientTerm::Pantograph(with_k(pg(0.04, &delta1).signed())),
                    ],
                ],
                vec![
                    vec![CoefficientTerm::Pantograph(with_k(
                        pg(0.5, nu).with_point_exponent(2.0).with_delay_exponent(2.0),
                    ))
                    .into()],
                    vec![CoefficientTerm::Pantograph(with_k(pg(0.1, &delta1).signed())).into()],
                ],
            ),
            Preset::Example37 => (
                vec![
                    vec![
                        CoefficientTerm::point(vec![mono(-6.0, 1.0), mono(-6.0, 3.0), mono(-6.0, 7.0)]),
                        CoefficientTerm::Pantograph(pg(0.5, nu).signed()),
                    ],
                    vec![
                        CoefficientTerm::linear(0.04),
                        CoefficientTerm::Pantograph(pg(0.03, &delta1).signed()),
                    ],
                ],
                vec![
                    vec![
                        CoefficientTerm::Pantograph(pg(0.2, nu).with_point_exponent(1.5).with_delay_exponent(2.5))
                            .into(),
                    ],
                    vec![CoefficientTerm::Pantograph(pg(0.1, &delta1)).into()],
                ],
            ),
        };
        let m = ModelSpec {
            dim: 1,
            brownian_dim: 1,
            theta_lower,
            t0: DEFAULT_T0,
            generator: self.generator(),
            drift,
            diffusion,
            initial_segment: InitialSegment::constant_scalar(DEFAULT_XI),
        };
        m.validate()?;
        Ok(m)
    }

    /// [`Preset::model`] with [`Preset::default_measure`].
    pub fn default_model(self) -> ModelSpec {
        self.model(&self.default_measure()).expect("default preset model")
    }

    pub fn lyapunov(self) -> LyapunovFamily {
        let t = PolyTerm::new;
        let (regimes, u0, u) = match self {
            Preset::Example34 => (
                vec![vec![t(1.0, 2)], vec![t(2.0, 2), t(2.0, 6)]],
                t(1.0, 2),
                vec![t(1.0, 2), t(1.0, 6)],
            ),
            Preset::Example35 => (
                vec![vec![t(1.0, 2)], vec![t(2.0, 2), t(3.0, 8)]],
                t(1.0, 2),
                vec![t(1.0, 2), t(1.0, 8)],
            ),
            Preset::Example37 => (
                vec![vec![t(1.0, 4)], vec![t(2.0, 4), t(3.0, 10)]],
                t(1.0, 4),
                vec![t(1.0, 4), t(1.0, 10)],
            ),
        };
        LyapunovFamily::new(regimes, u0, u).expect("valid preset Lyapunov family")
    }

    /// Certificate constants, `t0 = 1`.
    pub fn certificate(self) -> CertificateData {
        let ct = CrossTerm::new;
        let families = match self {
            Preset::Example34 => vec![
                Family::new(1.8, vec![ct(1.0, 0.5), ct(0.08, 0.0)]).with_power(2),
                Family::new(3.4, vec![ct(0.6, 5.0 / 6.0), ct(1.2, 4.0 / 6.0)]).with_power(6),
            ],
            Preset::Example35 => vec![
                Family::new(2.64, vec![ct(2.0, 0.5)]).with_power(2),
                Family::new(6.24, vec![ct(0.25, 0.5)]).with_power(8),
            ],
            Preset::Example37 => vec![
                Family::new(3.32, vec![ct(2.0, 0.75)]).with_power(4),
                Family::new(8.55, vec![ct(0.24, 0.5)]).with_power(10),
            ],
        };
        CertificateData {
            a0: 0.0,
            families,
            theta_lower: self.theta_lower(),
            beta: self.beta(),
            t0: DEFAULT_T0,
        }
    }

    /// Power of `U_0`.
    pub fn u0_power(self) -> u32 {
        self.lyapunov().u0.power
    }
}

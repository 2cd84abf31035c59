//! Simulation and stability analysis for hybrid pantograph stochastic
//! functional differential equations
//!
//! ```text
//! dx(t) = f(x_t, t, r(t)) dt + g(x_t, t, r(t)) dB(t),   t >= t0
//! x(t)  = xi(t),                                         t in [θ̲·t0, t0]
//! ```
//!
//! where `x_t(θ) = x(θ t)` for `θ ∈ [θ̲, 1]` is the pantograph segment and
//! `r(t)` is a continuous-time Markov chain on `{1, …, N}`.
//!
//! The crate is organised bottom-up:
//!
//! * [`markov`]: generator matrices and exact jump-chain sampling of `r(t)`.
//! * [`paths`]: dense piecewise-linear trajectories and segment views.
//! * [`models`]: coefficient terms, measures, kernels and [`ModelSpec`].
//! * [`integrator`]: Euler–Maruyama along a sampled regime path, batches.
//! * [`lyapunov`]: the operator `LV` and the Itô martingale residual.
//! * [`certificates`]: arithmetic checks of the dissipation hypotheses.
//! * [`estimators`]: Monte Carlo decay-rate estimation.
//! * [`experiment`]: JSON-configured runs with CSV output.
//!
//! Path-level work runs on rayon when the `parallel` feature is enabled
//! (the default). Results never depend on the number of worker threads.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod estimators;
pub mod experiment;
pub mod integrator;
pub mod lyapunov;
pub mod markov;
pub mod models;
pub mod parallel;
pub mod paths;
pub mod presets;
pub mod stats;

pub use certificates::{CertificateData, CertificateError, CertificateVerdict};
pub use estimators::{EstimatorError, RateKind, RateReport};
pub use integrator::{IntegrateError, IntegratorConfig, PathSeed, SimulationBatch};
pub use lyapunov::{LyapunovError, LyapunovFamily};
pub use markov::{GeneratorMatrix, MarkovError, Regime, RegimePath};
pub use models::{CoefficientTerm, Measure, ModelError, ModelSpec};
pub use parallel::Execution;
pub use paths::{DensePath, PathError, Segment, SegmentView};
pub use presets::Preset;

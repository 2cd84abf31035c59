//! JSON-configured experiments and their CSV outputs.
//!
//! ```json
//! {
//!   "model": { "preset": "example_3_4" },
//!   "t_end": 30.0, "dt": 0.01, "paths": 2000, "seed": 7,
//!   "moments": [2.0, 6.0], "write_paths": false
//! }
//! ```
//!
//! A custom model is given inline as `{"custom": { …ModelSpec… }}`. All
//! numbers are written with Rust's shortest round-trip formatting, so equal
//! runs produce equal bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::{self, CertificateData, CertificateError, CertificateKind, CertificateVerdict};
use crate::estimators::{self, EstimatorError, EstimatorOptions, RateKind, RateReport};
use crate::integrator::{run_batch_with, IntegrateError, IntegratorConfig, SimulationBatch, DEFAULT_BLOWUP_THRESHOLD};
use crate::lyapunov::{self, LyapunovError, LyapunovFamily, ResidualReport};
use crate::markov::{GeneratorMatrix, Regime};
use crate::models::{Measure, ModelError, ModelSpec};
use crate::parallel::Execution;
use crate::paths::{norm, InitialSegment};
use crate::presets::Preset;
use crate::stats;

/// Largest tolerated fraction of exploded paths for a certified-stable model.
pub const MAX_EXPLODED_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad config: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error("{n_exploded} of {n_paths} paths exploded for a certified-stable model; dt is probably too coarse")]
    ExcessiveBlowUp { n_exploded: usize, n_paths: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One requested certificate and its verdict.
pub type CertifyOutcome = (CertificateKind, Result<CertificateVerdict, CertificateError>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Preset(Preset),
    Custom(Box<ModelSpec>),
}

fn default_moments() -> Vec<f64> {
    vec![2.0]
}

fn default_blowup() -> f64 {
    DEFAULT_BLOWUP_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    /// Delay measure for a preset; the preset default when absent.
    #[serde(default)]
    pub measure: Option<Measure>,
    /// Replaces `ξ`.
    #[serde(default)]
    pub initial_segment: Option<InitialSegment>,
    /// Shorthand for a constant scalar `ξ`.
    #[serde(default)]
    pub initial_value: Option<f64>,
    #[serde(default)]
    pub initial_regime: Option<Regime>,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub generator: Option<GeneratorMatrix>,
    pub t_end: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    /// Powers `p` whose means `E|x(t)|^p` go into the summary.
    #[serde(default = "default_moments")]
    pub moments: Vec<f64>,
    #[serde(default)]
    pub write_paths: bool,
    /// Overrides the preset Lyapunov family (required for custom models).
    #[serde(default)]
    pub lyapunov: Option<LyapunovFamily>,
    /// Overrides the preset certificate constants.
    #[serde(default)]
    pub certificate: Option<CertificateData>,
    /// Certificates checked by `certify`; a sensible default when empty.
    #[serde(default)]
    pub certificates: Vec<CertificateKind>,
    /// Time of the Itô residual check; `t0 + 1` when absent.
    #[serde(default)]
    pub ito_t_end: Option<f64>,
    /// Treat the model as certified stable (explosions above 1% fail the
    /// run). Defaults to `true` for presets.
    #[serde(default)]
    pub certified_stable: Option<bool>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    /// Minimal config for a preset.
    pub fn for_preset(preset: Preset, t_end: f64, dt: f64, paths: usize, seed: u64) -> Self {
        ExperimentConfig {
            model: ModelSource::Preset(preset),
            measure: None,
            initial_segment: None,
            initial_value: None,
            initial_regime: None,
            t0: None,
            generator: None,
            t_end,
            dt,
            paths,
            seed,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            moments: default_moments(),
            write_paths: false,
            lyapunov: None,
            certificate: None,
            certificates: Vec::new(),
            ito_t_end: None,
            certified_stable: None,
        }
    }

    pub fn preset(&self) -> Option<Preset> {
        match self.model {
            ModelSource::Preset(p) => Some(p),
            ModelSource::Custom(_) => None,
        }
    }

    pub fn label(&self) -> String {
        self.preset()
            .map_or_else(|| "custom".to_string(), |p| p.name().to_string())
    }

    pub fn build_model(&self) -> Result<ModelSpec, ExperimentError> {
        let mut m = match &self.model {
            ModelSource::Preset(p) => p.model(&self.measure.clone().unwrap_or_else(|| p.default_measure()))?,
            ModelSource::Custom(m) => {
                if self.measure.is_some() {
                    return Err(ExperimentError::Config("`measure` only applies to presets".into()));
                }
                (**m).clone()
            }
        };
        if let Some(t0) = self.t0 {
            m.t0 = t0;
        }
        if let Some(g) = &self.generator {
            m.generator = g.clone();
        }
        match (&self.initial_segment, self.initial_value) {
            (Some(_), Some(_)) => {
                return Err(ExperimentError::Config(
                    "give either `initial_segment` or `initial_value`, not both".into(),
                ))
            }
            (Some(xi), None) => m.initial_segment = xi.clone(),
            (None, Some(c)) => m.initial_segment = InitialSegment::Constant(vec![c; m.dim]),
            (None, None) => {}
        }
        m.validate()?;
        Ok(m)
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            t_end: self.t_end,
            dt: self.dt,
            blowup_threshold: self.blowup_threshold,
        }
    }

    pub fn initial_regime(&self) -> Regime {
        self.initial_regime.unwrap_or(Regime::new(1))
    }

    pub fn lyapunov_family(&self) -> Result<LyapunovFamily, ExperimentError> {
        if let Some(v) = &self.lyapunov {
            v.validate()?;
            return Ok(v.clone());
        }
        self.preset()
            .map(Preset::lyapunov)
            .ok_or_else(|| ExperimentError::Config("custom models need a `lyapunov` family".into()))
    }

    pub fn certificate_data(&self) -> Result<CertificateData, ExperimentError> {
        if let Some(c) = &self.certificate {
            return Ok(c.clone());
        }
        self.preset()
            .map(Preset::certificate)
            .ok_or_else(|| ExperimentError::Config("custom models need `certificate` constants".into()))
    }

    fn is_certified_stable(&self) -> bool {
        self.certified_stable.unwrap_or(self.preset().is_some())
    }

    /// Integrates the batch.
    pub fn run(&self, exec: Execution) -> Result<SimulationBatch, ExperimentError> {
        let m = self.build_model()?;
        Ok(run_batch_with(
            &m,
            &self.integrator_config(),
            self.paths,
            self.initial_regime(),
            self.seed,
            exec,
        )?)
    }

    /// Fails when more than 1% of the paths of a certified-stable model exploded.
    pub fn check_blowups(&self, batch: &SimulationBatch) -> Result<(), ExperimentError> {
        let n_exploded = batch.n_exploded();
        if self.is_certified_stable() && n_exploded as f64 > MAX_EXPLODED_FRACTION * batch.n_paths() as f64 {
            return Err(ExperimentError::ExcessiveBlowUp {
                n_exploded,
                n_paths: batch.n_paths(),
            });
        }
        Ok(())
    }

    /// Runs the batch and the Itô residual check at `ito_t_end` (or `t0 + 1`).
    pub fn check_ito(&self, exec: Execution) -> Result<ResidualReport, ExperimentError> {
        let v = self.lyapunov_family()?;
        let batch = self.run(exec)?;
        let t_end = self.ito_t_end.unwrap_or(batch.t0() + 1.0);
        Ok(lyapunov::martingale_residual_with(&v, &batch, t_end, exec)?)
    }

    /// The requested certificate kinds, defaulting to existence plus the
    /// exponential rate (kernel form) or the polynomial rate (kernel-free).
    pub fn requested_certificates(&self) -> Result<Vec<CertificateKind>, ExperimentError> {
        if !self.certificates.is_empty() {
            return Ok(self.certificates.clone());
        }
        let c = self.certificate_data()?;
        let rate = if c.beta.is_some() {
            CertificateKind::Exponential
        } else {
            CertificateKind::Polynomial
        };
        Ok(vec![CertificateKind::Existence, rate])
    }

    /// Evaluates every requested certificate. Solver errors are returned
    /// per entry rather than aborting.
    pub fn certify(&self) -> Result<Vec<CertifyOutcome>, ExperimentError> {
        let c = self.certificate_data()?;
        Ok(self
            .requested_certificates()?
            .into_iter()
            .map(|k| {
                let v = match k {
                    CertificateKind::Existence => certificates::check_existence(&c),
                    CertificateKind::Exponential => certificates::solve_epsilon_exponential(&c),
                    CertificateKind::Polynomial => certificates::solve_epsilon_polynomial(&c),
                };
                (k, v)
            })
            .collect())
    }

    pub fn estimate(&self, kind: RateKind, power: f64, exec: Execution) -> Result<RateReport, ExperimentError> {
        let batch = self.run(exec)?;
        self.check_blowups(&batch)?;
        let opts = EstimatorOptions {
            exec,
            ..EstimatorOptions::default()
        };
        Ok(estimators::estimate(&batch, kind, power, &opts)?)
    }
}

/// Per-time summary over the non-exploded paths: regime occupancy and the
/// requested moments.
pub fn write_summary<W: Write>(batch: &SimulationBatch, moments: &[f64], writer: W) -> Result<(), ExperimentError> {
    let times = batch.observation_times();
    let n_regimes = batch.model.n_regimes();
    let alive: Vec<_> = batch.paths().iter().filter(|p| !p.is_exploded()).collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend((1..=n_regimes).map(|i| format!("occupancy_{i}")));
    header.extend(moments.iter().map(|p| format!("moment_{p}")));
    w.write_record(&header)?;
    let mut buf = vec![0.0; batch.model.dim];
    let n = alive.len() as f64;
    for &t in &times {
        let mut occ = vec![0usize; n_regimes];
        let mut norms = Vec::with_capacity(alive.len());
        for p in &alive {
            occ[p.regime_at(t).index()] += 1;
            p.eval_into(t, &mut buf).expect("non-exploded path covers the grid");
            norms.push(norm(&buf));
        }
        let mut row = vec![t.to_string()];
        row.extend(occ.iter().map(|&c| (c as f64 / n).to_string()));
        for &p in moments {
            row.push((stats::sum(norms.iter().map(|r| r.powf(p))) / n).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes `summary.csv` (and `paths/path_NNNNN.csv` when requested) into `out`.
/// Returns the files written.
pub fn write_outputs(
    config: &ExperimentConfig,
    batch: &SimulationBatch,
    out: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut written = Vec::new();
    let summary = out.join("summary.csv");
    let f = File::create(&summary).map_err(io_err(&summary))?;
    write_summary(batch, &config.moments, BufWriter::new(f))?;
    written.push(summary);
    if config.write_paths {
        let dir = out.join("paths");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (k, p) in batch.paths().iter().enumerate() {
            let file = dir.join(format!("path_{k:05}.csv"));
            let f = File::create(&file).map_err(io_err(&file))?;
            p.write_csv(BufWriter::new(f))?;
            written.push(file);
        }
    }
    Ok(written)
}

/// Runs `config` and writes its outputs; blow-up policy is enforced after
/// the files are written so a failing run still leaves its data behind.
pub fn simulate(config: &ExperimentConfig, out: &Path, exec: Execution) -> Result<SimulationBatch, ExperimentError> {
    let batch = config.run(exec)?;
    write_outputs(config, &batch, out)?;
    config.check_blowups(&batch)?;
    Ok(batch)
}

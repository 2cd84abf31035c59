//! Euler–Maruyama along an exactly sampled regime path.
//!
//! On each step `[s, s + h]` the segment is frozen at the left endpoint:
//!
//! ```text
//! x(s + h) = x(s) + f(x_s, s, r(s)) h + g(x_s, s, r(s)) ΔB
//! ```
//!
//! The grid is the uniform grid `t0 + k·dt` (last point `T`) merged with the
//! switch times of the chain, so the regime is constant on every step.
//!
//! # Random streams
//!
//! A path is identified by a [`PathSeed`] `(root, index)`. Both streams are
//! ChaCha8 seeded from `root`: the regime path uses stream `2·index`, the
//! Brownian increments stream `2·index + 1`. [`GaussianIncrements`] draws
//! `d` standard normals per step, in step order, component by component.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::{sample_regime_path_with, MarkovError, Regime, RegimePath};
use crate::models::{ModelError, ModelSpec, Scratch};
use crate::parallel::{map_indexed, Execution};
use crate::paths::{norm, BlowUp, BlowUpKind, DensePath, PathError, SegmentView};

pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Path(#[from] PathError),
}

fn default_blowup() -> f64 {
    DEFAULT_BLOWUP_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Horizon `T`.
    pub t_end: f64,
    pub dt: f64,
    /// Integration stops once `|x|` exceeds this.
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
}

impl IntegratorConfig {
    pub fn new(t_end: f64, dt: f64) -> Self {
        IntegratorConfig {
            t_end,
            dt,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        }
    }

    pub fn validate(&self, t0: f64) -> Result<(), IntegrateError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegrateError::InvalidConfig(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_end > t0 && self.t_end.is_finite()) {
            return Err(IntegrateError::InvalidConfig(format!(
                "horizon {} must exceed t0 = {t0}",
                self.t_end
            )));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(IntegrateError::InvalidConfig(
                "blow-up threshold must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `t0, t0 + dt, …, T`. Each point is computed as `t0 + k·dt`, the last
    /// one is `T` exactly (possibly after a shorter step).
    pub fn uniform_grid(&self, t0: f64) -> Vec<f64> {
        let span = self.t_end - t0;
        let steps = ((span / self.dt) - 1e-9).ceil().max(1.0) as usize;
        let mut grid: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * self.dt).collect();
        grid.push(self.t_end);
        grid
    }
}

/// Identifies the random streams of one path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSeed {
    pub root: u64,
    pub index: u64,
}

impl PathSeed {
    pub fn new(root: u64, index: u64) -> Self {
        PathSeed { root, index }
    }

    pub fn regime_rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(2 * self.index);
        rng
    }

    pub fn noise_rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(2 * self.index + 1);
        rng
    }
}

/// Supplier of Brownian increments `B(t + h) − B(t)`.
pub trait BrownianSource {
    fn increment(&mut self, t: f64, h: f64, out: &mut [f64]);
}

/// Fresh `N(0, h·I)` increments per step.
pub struct GaussianIncrements<R> {
    rng: R,
}

impl<R: Rng> GaussianIncrements<R> {
    pub fn new(rng: R) -> Self {
        GaussianIncrements { rng }
    }
}

impl<R: Rng> BrownianSource for GaussianIncrements<R> {
    fn increment(&mut self, _t: f64, h: f64, out: &mut [f64]) {
        let s = h.sqrt();
        for o in out.iter_mut() {
            *o = s * self.rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// A Brownian path tabulated on a fine grid, linearly interpolated in
/// between. Lets paths at different step sizes share one realisation.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    times: Vec<f64>,
    /// Row-major, `dim` values per time.
    values: Vec<f64>,
    dim: usize,
}

impl BrownianPath {
    /// Samples `B` on `t0, t0 + dt, …, t_end` with `B(t0) = 0`, using
    /// [`GaussianIncrements`] on `rng`.
    pub fn sample<R: Rng>(t0: f64, t_end: f64, dt: f64, dim: usize, rng: R) -> Self {
        let times = IntegratorConfig::new(t_end, dt).uniform_grid(t0);
        let mut src = GaussianIncrements::new(rng);
        let mut values = vec![0.0; dim];
        let mut inc = vec![0.0; dim];
        for w in times.windows(2) {
            src.increment(w[0], w[1] - w[0], &mut inc);
            let base = values.len() - dim;
            for j in 0..dim {
                let v = values[base + j] + inc[j];
                values.push(v);
            }
        }
        BrownianPath { times, values, dim }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value_into(&self, t: f64, out: &mut [f64]) {
        let ts = &self.times;
        let k = ts.partition_point(|&s| s < t);
        if k < ts.len() && ts[k] == t {
            out.copy_from_slice(&self.values[k * self.dim..(k + 1) * self.dim]);
            return;
        }
        let k = k.clamp(1, ts.len() - 1);
        let w = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
        for (j, o) in out.iter_mut().enumerate() {
            let a = self.values[(k - 1) * self.dim + j];
            let b = self.values[k * self.dim + j];
            *o = a + w * (b - a);
        }
    }
}

impl BrownianSource for BrownianPath {
    fn increment(&mut self, t: f64, h: f64, out: &mut [f64]) {
        let mut a = vec![0.0; self.dim];
        self.value_into(t, &mut a);
        self.value_into(t + h, out);
        for (o, x) in out.iter_mut().zip(a) {
            *o -= x;
        }
    }
}

/// Uniform grid merged with the switch times of `regimes`.
pub fn merged_grid(cfg: &IntegratorConfig, t0: f64, regimes: &RegimePath) -> Vec<f64> {
    let uniform = cfg.uniform_grid(t0);
    let switches = regimes.switch_times();
    let mut out = Vec::with_capacity(uniform.len() + switches.len());
    let (mut i, mut j) = (0, 0);
    while i < uniform.len() || j < switches.len() {
        let next = match (uniform.get(i), switches.get(j)) {
            (Some(&u), Some(&s)) if s < u => {
                j += 1;
                s
            }
            (Some(&u), Some(&s)) if s == u => {
                j += 1;
                i += 1;
                u
            }
            (Some(&u), _) => {
                i += 1;
                u
            }
            (None, Some(&s)) => {
                j += 1;
                s
            }
            (None, None) => unreachable!(),
        };
        if next <= cfg.t_end && out.last().is_none_or(|&l| next > l) {
            out.push(next);
        }
    }
    out
}

/// Integrates one path along a given regime path and noise source.
///
/// A tripped blow-up guard (or a non-finite state) ends the path early and
/// is recorded on the returned [`DensePath`]; it is not an error.
pub fn integrate_path_with<B: BrownianSource>(
    m: &ModelSpec,
    cfg: &IntegratorConfig,
    regimes: &RegimePath,
    noise: &mut B,
) -> Result<DensePath, IntegrateError> {
    cfg.validate(m.t0)?;
    let grid = merged_grid(cfg, m.t0, regimes);
    let initial = regimes.state_at(m.t0);
    let mut path = DensePath::from_initial(m.dim, m.theta_lower, m.t0, &m.initial_segment, initial)?;
    let (n, d) = (m.dim, m.brownian_dim);
    let mut scratch = Scratch::new(n);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n * d];
    let mut db = vec![0.0; d];
    let mut x = path.last_value().to_vec();
    let switches = regimes.switch_times();
    let states = regimes.states();
    let mut seg_idx = 0;

    for w in grid.windows(2) {
        let (s, next) = (w[0], w[1]);
        while seg_idx < switches.len() && switches[seg_idx] <= s {
            seg_idx += 1;
        }
        let regime = states[seg_idx];
        let h = next - s;
        {
            let seg = SegmentView::at_head(&path);
            m.drift_into(&seg, s, regime, &mut scratch, &mut f);
            m.diffusion_into(&seg, s, regime, &mut scratch, &mut g);
        }
        noise.increment(s, h, &mut db);
        for (row, xr) in x.iter_mut().enumerate() {
            let mut dx = f[row] * h;
            for (col, b) in db.iter().enumerate() {
                dx += g[row * d + col] * b;
            }
            *xr += dx;
        }
        let size = norm(&x);
        if !size.is_finite() {
            path.mark_blowup(BlowUp {
                time: next,
                kind: BlowUpKind::NonFinite,
            });
            break;
        }
        if size > cfg.blowup_threshold {
            path.mark_blowup(BlowUp {
                time: next,
                kind: BlowUpKind::Threshold,
            });
            break;
        }
        let next_regime = if seg_idx < switches.len() && switches[seg_idx] <= next {
            states[seg_idx + 1]
        } else {
            regime
        };
        path.push(next, &x, next_regime);
    }
    Ok(path)
}

/// Samples the regime path and the noise from `seed` and integrates.
pub fn integrate_path(
    m: &ModelSpec,
    cfg: &IntegratorConfig,
    initial: Regime,
    seed: PathSeed,
) -> Result<DensePath, IntegrateError> {
    cfg.validate(m.t0)?;
    let regimes = sample_regime_path_with(&m.generator, initial, m.t0, cfg.t_end, &mut seed.regime_rng())?;
    integrate_path_with(m, cfg, &regimes, &mut GaussianIncrements::new(seed.noise_rng()))
}

/// A finished Monte Carlo batch. Path `k` used `PathSeed::new(root_seed, k)`.
#[derive(Clone, Debug)]
pub struct SimulationBatch {
    pub model: ModelSpec,
    pub config: IntegratorConfig,
    pub initial_regime: Regime,
    pub root_seed: u64,
    paths: Vec<DensePath>,
}

impl SimulationBatch {
    /// Wraps externally produced paths (they must share the model's `t0`).
    pub fn from_paths(
        model: ModelSpec,
        config: IntegratorConfig,
        initial_regime: Regime,
        root_seed: u64,
        paths: Vec<DensePath>,
    ) -> Self {
        SimulationBatch {
            model,
            config,
            initial_regime,
            root_seed,
            paths,
        }
    }

    pub fn paths(&self) -> &[DensePath] {
        &self.paths
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_exploded(&self) -> usize {
        self.paths.iter().filter(|p| p.is_exploded()).count()
    }

    pub fn t0(&self) -> f64 {
        self.model.t0
    }

    /// The shared uniform grid `t0, t0 + dt, …, T`.
    pub fn observation_times(&self) -> Vec<f64> {
        self.config.uniform_grid(self.model.t0)
    }
}

fn prepare(m: &ModelSpec, cfg: &IntegratorConfig, n_paths: usize, initial: Regime) -> Result<(), IntegrateError> {
    m.validate()?;
    cfg.validate(m.t0)?;
    m.generator.check_regime(initial)?;
    if n_paths == 0 {
        return Err(IntegrateError::InvalidConfig("a batch needs at least one path".into()));
    }
    Ok(())
}

/// Runs `n_paths` independent paths on the default execution mode.
pub fn run_batch(
    m: &ModelSpec,
    cfg: &IntegratorConfig,
    n_paths: usize,
    initial: Regime,
    root_seed: u64,
) -> Result<SimulationBatch, IntegrateError> {
    run_batch_with(m, cfg, n_paths, initial, root_seed, Execution::default())
}

pub fn run_batch_with(
    m: &ModelSpec,
    cfg: &IntegratorConfig,
    n_paths: usize,
    initial: Regime,
    root_seed: u64,
    exec: Execution,
) -> Result<SimulationBatch, IntegrateError> {
    let paths = map_batch(m, cfg, n_paths, initial, root_seed, exec, |p| p)?;
    Ok(SimulationBatch::from_paths(
        m.clone(),
        cfg.clone(),
        initial,
        root_seed,
        paths,
    ))
}

/// Integrates each path and immediately maps it through `f`, so only a
/// handful of dense paths are alive at once.
pub fn map_batch<T, F>(
    m: &ModelSpec,
    cfg: &IntegratorConfig,
    n_paths: usize,
    initial: Regime,
    root_seed: u64,
    exec: Execution,
    f: F,
) -> Result<Vec<T>, IntegrateError>
where
    T: Send,
    F: Fn(DensePath) -> T + Sync + Send,
{
    prepare(m, cfg, n_paths, initial)?;
    map_indexed(n_paths, exec, |k| {
        integrate_path(m, cfg, initial, PathSeed::new(root_seed, k as u64)).map(&f)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::GeneratorMatrix;
    use crate::models::CoefficientTerm;
    use crate::paths::InitialSegment;

    fn gbm(mu: f64, sigma: f64) -> ModelSpec {
        ModelSpec {
            dim: 1,
            brownian_dim: 1,
            theta_lower: 0.5,
            t0: 1.0,
            generator: GeneratorMatrix::single_state(),
            drift: vec![vec![CoefficientTerm::linear(mu)]],
            diffusion: vec![vec![CoefficientTerm::linear(sigma).into()]],
            initial_segment: InitialSegment::constant_scalar(1.0),
        }
    }

    #[test]
    fn grid_hits_horizon_exactly() {
        let cfg = IntegratorConfig::new(2.0, 1e-3);
        let g = cfg.uniform_grid(1.0);
        assert_eq!(g.len(), 1001);
        assert_eq!(*g.last().unwrap(), 2.0);
        let cfg = IntegratorConfig::new(1.25, 0.1);
        let g = cfg.uniform_grid(1.0);
        assert_eq!(g.len(), 4);
        assert!((g[2] - 1.2).abs() < 1e-15 && g[3] == 1.25);
    }

    #[test]
    fn switch_times_enter_grid() {
        let g = GeneratorMatrix::new(vec![vec![-5.0, 5.0], vec![5.0, -5.0]]).unwrap();
        let rp = sample_regime_path_with(&g, Regime::new(1), 1.0, 3.0, &mut PathSeed::new(4, 0).regime_rng()).unwrap();
        assert!(rp.n_jumps() > 0);
        let grid = merged_grid(&IntegratorConfig::new(3.0, 0.1), 1.0, &rp);
        for s in rp.switch_times() {
            assert!(grid.contains(s));
        }
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_solution_without_coefficients() {
        let m = gbm(0.0, 0.0);
        let p = integrate_path(
            &m,
            &IntegratorConfig::new(3.0, 0.01),
            Regime::new(1),
            PathSeed::new(1, 0),
        )
        .unwrap();
        assert!(p.times().iter().all(|&t| p.eval(t).unwrap() == vec![1.0]));
    }

    #[test]
    fn blowup_is_recorded() {
        let mut m = gbm(30.0, 0.0);
        m.initial_segment = InitialSegment::constant_scalar(1.0);
        let cfg = IntegratorConfig {
            blowup_threshold: 1e3,
            ..IntegratorConfig::new(5.0, 0.01)
        };
        let p = integrate_path(&m, &cfg, Regime::new(1), PathSeed::new(1, 0)).unwrap();
        let at = p.exploded_at().unwrap();
        assert!(at < 5.0);
        assert!(p.last_value()[0].abs() <= 1e3);
        assert!(matches!(p.eval(at + 0.5), Err(PathError::PathExploded { .. })));
    }

    #[test]
    fn nan_is_recorded_as_non_finite() {
        let mut m = gbm(0.0, 0.0);
        m.drift[0][0] = CoefficientTerm::linear(f64::NAN);
        let p = integrate_path(
            &m,
            &IntegratorConfig::new(2.0, 0.1),
            Regime::new(1),
            PathSeed::new(1, 0),
        )
        .unwrap();
        assert_eq!(p.blowup().unwrap().kind, BlowUpKind::NonFinite);
    }

    #[test]
    fn batch_of_one_matches_single_path() {
        let m = gbm(0.1, 0.3);
        let cfg = IntegratorConfig::new(2.0, 0.01);
        let b = run_batch(&m, &cfg, 1, Regime::new(1), 77).unwrap();
        let p = integrate_path(&m, &cfg, Regime::new(1), PathSeed::new(77, 0)).unwrap();
        assert_eq!(b.paths()[0], p);
    }

    #[test]
    fn streams_are_distinct() {
        let a: f64 = PathSeed::new(1, 0).noise_rng().random();
        let b: f64 = PathSeed::new(1, 1).noise_rng().random();
        let c: f64 = PathSeed::new(1, 0).regime_rng().random();
        assert!(a != b && a != c);
    }
}

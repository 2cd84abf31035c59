//! Continuous-time Markov chains on a finite state space.
//!
//! Regimes are labelled `1..=N` everywhere outside this crate (configs, CSV,
//! CLI output). Internally a [`Regime`] carries the 0-based index.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on generator row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("generator must be a non-empty square matrix, got {rows} rows with row lengths {cols:?}")]
    NotSquare { rows: usize, cols: Vec<usize> },
    #[error("negative off-diagonal rate {value} at ({row}, {col})")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 0")]
    RowSumNonZero { row: usize, sum: f64 },
    #[error("non-finite rate at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("chain is reducible: stationary distribution is not unique (null space dimension {nullity})")]
    ReducibleChain { nullity: usize },
    #[error("regime label {label} outside 1..={n_states}")]
    InvalidRegime { label: usize, n_states: usize },
    #[error("empty time horizon [{t0}, {t_end}]")]
    EmptyHorizon { t0: f64, t_end: f64 },
}

/// A regime of the switching chain.
///
/// Serialised as its 1-based label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Regime(usize);

impl Regime {
    /// Regime from its 1-based label. Panics on label 0.
    pub const fn new(label: usize) -> Self {
        assert!(label >= 1, "regime labels start at 1");
        Regime(label - 1)
    }

    pub const fn from_index(index: usize) -> Self {
        Regime(index)
    }

    /// 0-based index into per-regime tables.
    pub const fn index(self) -> usize {
        self.0
    }

    /// 1-based label.
    pub const fn label(self) -> usize {
        self.0 + 1
    }
}

impl TryFrom<usize> for Regime {
    type Error = String;

    fn try_from(label: usize) -> Result<Self, Self::Error> {
        if label == 0 {
            Err("regime labels start at 1".into())
        } else {
            Ok(Regime(label - 1))
        }
    }
}

impl From<Regime> for usize {
    fn from(r: Regime) -> usize {
        r.label()
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Transition-rate matrix `Γ = (γ_ij)` of a continuous-time Markov chain.
///
/// Off-diagonal entries are non-negative and every row sums to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct GeneratorMatrix {
    n: usize,
    rates: Vec<f64>,
}

impl GeneratorMatrix {
    /// Validates a row-major rate matrix.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MarkovError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(MarkovError::NotSquare {
                rows: n,
                cols: rows.iter().map(Vec::len).collect(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(MarkovError::NonFinite { row: i, col: j });
                }
                if i != j && v < 0.0 {
                    return Err(MarkovError::NegativeOffDiagonal {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > ROW_SUM_TOLERANCE {
                return Err(MarkovError::RowSumNonZero { row: i, sum });
            }
        }
        Ok(GeneratorMatrix {
            n,
            rates: rows.into_iter().flatten().collect(),
        })
    }

    /// The generator of a chain that never leaves its single state.
    pub fn single_state() -> Self {
        GeneratorMatrix { n: 1, rates: vec![0.0] }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    /// `γ_ij` for 0-based indices.
    pub fn rate(&self, from: Regime, to: Regime) -> f64 {
        self.rates[from.index() * self.n + to.index()]
    }

    pub fn row(&self, from: Regime) -> &[f64] {
        let i = from.index();
        &self.rates[i * self.n..(i + 1) * self.n]
    }

    /// Total exit rate `-γ_ii`.
    pub fn exit_rate(&self, from: Regime) -> f64 {
        -self.rate(from, from)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.rates.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn check_regime(&self, r: Regime) -> Result<(), MarkovError> {
        if r.index() < self.n {
            Ok(())
        } else {
            Err(MarkovError::InvalidRegime {
                label: r.label(),
                n_states: self.n,
            })
        }
    }

    /// The unique probability vector `π` with `πΓ = 0`.
    ///
    /// Computed as the null vector of `Γᵀ` from a singular value
    /// decomposition; more than one vanishing singular value means the
    /// stationary law is not unique.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>, MarkovError> {
        let n = self.n;
        let gamma_t = DMatrix::from_fn(n, n, |i, j| self.rates[j * n + i]);
        // Square the system so that V has a full set of right singular vectors.
        let svd = gamma_t.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let scale = svd.singular_values.max().max(1.0);
        let null: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] <= 1e-10 * scale).collect();
        if null.len() != 1 {
            return Err(MarkovError::ReducibleChain { nullity: null.len() });
        }
        let row = v_t.row(null[0]);
        let total: f64 = row.iter().sum();
        Ok(row.iter().map(|v| (v / total).max(0.0)).collect())
    }
}

impl TryFrom<Vec<Vec<f64>>> for GeneratorMatrix {
    type Error = MarkovError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        GeneratorMatrix::new(rows)
    }
}

impl From<GeneratorMatrix> for Vec<Vec<f64>> {
    fn from(g: GeneratorMatrix) -> Self {
        g.rows()
    }
}

/// Convenience wrapper around [`GeneratorMatrix::new`].
pub fn make_generator(rows: Vec<Vec<f64>>) -> Result<GeneratorMatrix, MarkovError> {
    GeneratorMatrix::new(rows)
}

/// A right-continuous, piecewise-constant sample path of the chain on `[t0, t_end]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimePath {
    t0: f64,
    t_end: f64,
    /// Jump times in `(t0, t_end)`, strictly increasing.
    switch_times: Vec<f64>,
    /// `states[0]` holds on `[t0, switch_times[0])`, and so on.
    states: Vec<Regime>,
}

impl RegimePath {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn states(&self) -> &[Regime] {
        &self.states
    }

    pub fn n_jumps(&self) -> usize {
        self.switch_times.len()
    }

    /// The regime in force at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> Regime {
        let k = self.switch_times.partition_point(|&s| s <= t);
        self.states[k]
    }

    /// `(regime, start, end, completed)` for each sojourn. The last sojourn is
    /// censored by the horizon and reported with `completed = false`.
    pub fn sojourns(&self) -> impl Iterator<Item = (Regime, f64, f64, bool)> + '_ {
        let n = self.states.len();
        (0..n).map(move |k| {
            let start = if k == 0 { self.t0 } else { self.switch_times[k - 1] };
            let end = if k + 1 < n { self.switch_times[k] } else { self.t_end };
            (self.states[k], start, end, k + 1 < n)
        })
    }

    /// Fraction of `[t0, t_end]` spent in each of `n_states` regimes.
    pub fn occupation_fractions(&self, n_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        for (r, a, b, _) in self.sojourns() {
            occ[r.index()] += b - a;
        }
        let span = self.t_end - self.t0;
        occ.iter_mut().for_each(|o| *o /= span);
        occ
    }
}

/// Samples the jump chain exactly: holding time in `i` is exponential with
/// rate `-γ_ii` and the next state is `j` with probability `γ_ij / (-γ_ii)`.
///
/// Draw order per sojourn: one standard exponential, then (if the jump lands
/// before the horizon) one uniform for the destination.
pub fn sample_regime_path_with<R: Rng + ?Sized>(
    g: &GeneratorMatrix,
    initial: Regime,
    t0: f64,
    t_end: f64,
    rng: &mut R,
) -> Result<RegimePath, MarkovError> {
    g.check_regime(initial)?;
    if !(t0 < t_end) {
        return Err(MarkovError::EmptyHorizon { t0, t_end });
    }
    let mut switch_times = Vec::new();
    let mut states = vec![initial];
    let mut t = t0;
    let mut current = initial;
    loop {
        let exit = g.exit_rate(current);
        if exit <= 0.0 {
            break;
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / exit;
        t += hold;
        if t >= t_end {
            break;
        }
        let u: f64 = rng.random::<f64>() * exit;
        let row = g.row(current);
        let mut acc = 0.0;
        let mut next = None;
        for (j, &rate) in row.iter().enumerate() {
            if j == current.index() || rate <= 0.0 {
                continue;
            }
            acc += rate;
            next = Some(Regime::from_index(j));
            if u < acc {
                break;
            }
        }
        // exit > 0 guarantees at least one positive off-diagonal rate
        let next = next.expect("positive exit rate without destination");
        if t > *switch_times.last().unwrap_or(&t0) {
            switch_times.push(t);
            states.push(next);
        } else {
            // zero-length sojourn from float underflow: overwrite
            *states.last_mut().unwrap() = next;
        }
        current = next;
    }
    Ok(RegimePath {
        t0,
        t_end,
        switch_times,
        states,
    })
}

/// Samples a regime path from a seed, using stream 0 of that seed.
pub fn sample_regime_path(
    g: &GeneratorMatrix,
    initial: Regime,
    t0: f64,
    t_end: f64,
    seed: u64,
) -> Result<RegimePath, MarkovError> {
    let mut rng = crate::integrator::PathSeed::new(seed, 0).regime_rng();
    sample_regime_path_with(g, initial, t0, t_end, &mut rng)
}

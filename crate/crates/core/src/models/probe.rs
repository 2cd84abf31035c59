//! Randomised local Lipschitz diagnostic.
//!
//! Samples pairs of piecewise-linear segments inside the ball of radius `R`
//! and records `|f(φ) − f(φ')| / ‖φ − φ'‖` (and the same for `g`, Frobenius
//! norm). Scales are drawn log-uniformly so behaviour near the origin is
//! probed too: a ratio that keeps growing as the scale shrinks points at a
//! non-Lipschitz term such as `|x|^{1/2}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ModelSpec, Scratch};
use crate::markov::Regime;
use crate::paths::{KnotSegment, Segment};

const KNOTS: usize = 9;
/// Scales below `SMALL · R` count as "small", above `LARGE · R` as "large".
const SMALL: f64 = 1e-3;
const LARGE: f64 = 1e-1;
const MIN_SCALE: f64 = 1e-7;
const FLAG_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzProbe {
    pub radius: f64,
    pub trials: usize,
    /// Largest ratio seen, per regime.
    pub per_regime: Vec<f64>,
    pub max_ratio: f64,
    /// Largest ratio among pairs at scale `< 1e-3·R`.
    pub small_scale_ratio: f64,
    /// Largest ratio among pairs at scale `> 1e-1·R`.
    pub large_scale_ratio: f64,
    /// Ratios blow up at small scales, suggesting a non-Lipschitz term.
    pub flagged: bool,
}

/// Scalar-state probe. `trials` pairs are drawn for every regime.
pub fn validate_local_lipschitz_probe(m: &ModelSpec, radius: f64, trials: usize, seed: u64) -> LipschitzProbe {
    assert!(radius > 0.0, "probe radius must be positive");
    assert_eq!(m.dim, 1, "the probe samples scalar segments");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_lower = m.theta_lower;
    let thetas: Vec<f64> = (0..KNOTS)
        .map(|k| theta_lower + (1.0 - theta_lower) * k as f64 / (KNOTS - 1) as f64)
        .collect();
    let n = m.dim;
    let d = m.brownian_dim;
    let mut scratch = Scratch::new(n);
    let (mut fa, mut fb) = (vec![0.0; n], vec![0.0; n]);
    let (mut ga, mut gb) = (vec![0.0; n * d], vec![0.0; n * d]);
    let t = m.t0;

    let mut per_regime = vec![0.0_f64; m.n_regimes()];
    let (mut small, mut large) = (0.0_f64, 0.0_f64);
    for (i, best) in per_regime.iter_mut().enumerate() {
        let regime = Regime::from_index(i);
        for _ in 0..trials {
            // φ, φ' both inside the ball of radius `scale ≤ R`
            let scale = radius * MIN_SCALE.powf(rng.random::<f64>());
            let a: Vec<f64> = (0..KNOTS).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let b: Vec<f64> = a
                .iter()
                .map(|&x| (x + 0.5 * scale * (2.0 * rng.random::<f64>() - 1.0)).clamp(-scale, scale))
                .collect();
            let dist = a.iter().zip(&b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()));
            if dist == 0.0 {
                continue;
            }
            let sa = KnotSegment {
                thetas: thetas.clone(),
                values: a,
            };
            let sb = KnotSegment {
                thetas: thetas.clone(),
                values: b,
            };
            let ratio = pair_ratio(
                m,
                &sa,
                &sb,
                t,
                regime,
                &mut scratch,
                [&mut fa, &mut fb],
                [&mut ga, &mut gb],
            ) / dist;
            *best = best.max(ratio);
            if scale < SMALL * radius {
                small = small.max(ratio);
            } else if scale > LARGE * radius {
                large = large.max(ratio);
            }
        }
    }
    let max_ratio = per_regime.iter().copied().fold(0.0, f64::max);
    LipschitzProbe {
        radius,
        trials,
        per_regime,
        max_ratio,
        small_scale_ratio: small,
        large_scale_ratio: large,
        flagged: small > FLAG_FACTOR * large.max(f64::MIN_POSITIVE),
    }
}

#[allow(clippy::too_many_arguments)]
fn pair_ratio<S: Segment>(
    m: &ModelSpec,
    sa: &S,
    sb: &S,
    t: f64,
    regime: Regime,
    scratch: &mut Scratch,
    f: [&mut Vec<f64>; 2],
    g: [&mut Vec<f64>; 2],
) -> f64 {
    let [fa, fb] = f;
    let [ga, gb] = g;
    m.drift_into(sa, t, regime, scratch, fa);
    m.drift_into(sb, t, regime, scratch, fb);
    m.diffusion_into(sa, t, regime, scratch, ga);
    m.diffusion_into(sb, t, regime, scratch, gb);
    let l2 = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    l2(fa, fb).max(l2(ga, gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::GeneratorMatrix;
    use crate::models::{CoefficientTerm, Monomial};
    use crate::paths::InitialSegment;

    fn scalar(drift: Vec<CoefficientTerm>) -> ModelSpec {
        ModelSpec {
            dim: 1,
            brownian_dim: 1,
            theta_lower: 0.5,
            t0: 1.0,
            generator: GeneratorMatrix::single_state(),
            drift: vec![drift],
            diffusion: vec![vec![]],
            initial_segment: InitialSegment::constant_scalar(1.0),
        }
    }

    #[test]
    fn identity_drift_has_unit_ratio() {
        let p = validate_local_lipschitz_probe(&scalar(vec![CoefficientTerm::linear(1.0)]), 1.0, 2000, 3);
        assert!(p.max_ratio <= 1.0 + 1e-9);
        assert!(p.max_ratio > 0.1);
        assert!(!p.flagged);
    }

    #[test]
    fn square_root_is_flagged() {
        let m = scalar(vec![CoefficientTerm::point(vec![Monomial::new(1.0, 0.5)])]);
        let p = validate_local_lipschitz_probe(&m, 1.0, 2000, 3);
        assert!(p.flagged, "{p:?}");
    }

    #[test]
    fn deterministic_for_seed() {
        let m = scalar(vec![CoefficientTerm::point(vec![Monomial::new(-1.0, 3.0)])]);
        assert_eq!(
            validate_local_lipschitz_probe(&m, 2.0, 300, 9),
            validate_local_lipschitz_probe(&m, 2.0, 300, 9)
        );
    }
}

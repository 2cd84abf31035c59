use hpsfde::estimators::{
    estimate, estimate_as_rate, estimate_moment_rate, estimate_polynomial_rate, estimate_time_average, EstimatorError,
    EstimatorOptions, RateKind,
};
use hpsfde::integrator::run_batch;
use hpsfde::models::{CoefficientTerm, Monomial};
use hpsfde::paths::{DensePath, InitialSegment};
use hpsfde::{GeneratorMatrix, IntegratorConfig, ModelSpec, Preset, Regime, SimulationBatch};

const R1: Regime = Regime::new(1);

/// Scalar single-regime model with drift `a x` and no noise.
fn linear(a: f64, t0: f64) -> ModelSpec {
    ModelSpec {
        dim: 1,
        brownian_dim: 1,
        theta_lower: 0.5,
        t0,
        generator: GeneratorMatrix::single_state(),
        drift: vec![vec![CoefficientTerm::point(vec![Monomial::new(a, 1.0)])]],
        diffusion: vec![vec![]],
        initial_segment: InitialSegment::constant_scalar(1.0),
    }
}

/// `n` copies of `f` sampled on the batch grid.
fn sampled_batch(t0: f64, t_end: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> SimulationBatch {
    let model = linear(0.0, t0);
    let cfg = IntegratorConfig::new(t_end, dt);
    let mut times = vec![model.theta_lower * t0];
    times.extend(cfg.uniform_grid(t0));
    let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
    let regimes = vec![R1; times.len() - 1];
    let path = DensePath::from_samples(1, model.theta_lower, t0, times, values, regimes).unwrap();
    SimulationBatch::from_paths(model, cfg, R1, 0, vec![path; n])
}

#[test]
fn exponential_decay_has_exact_rates() {
    let t0 = 1.0;
    let batch = sampled_batch(t0, 11.0, 1e-3, 100, |t| 3.0 * (-(t - t0)).exp());
    let m = estimate_moment_rate(&batch, 2.0).unwrap();
    assert!((m.fitted_rate + 2.0).abs() < 1e-3, "{}", m.fitted_rate);
    assert!(m.stderr.abs() < 1e-12);
    assert_eq!(m.window, (6.0, 11.0));
    let a = estimate_as_rate(&batch, 2.0).unwrap();
    assert!((a.fitted_rate + 2.0).abs() < 1e-3, "{}", a.fitted_rate);
    for (_, q) in &a.quantiles {
        assert!((q - a.fitted_rate).abs() < 1e-12);
    }
}

#[test]
fn power_law_has_exact_polynomial_rate() {
    let batch = sampled_batch(1.0, 30.0, 1e-3, 100, |t| 2.0 / (1.0 + t));
    let r = estimate_polynomial_rate(&batch, 4.0).unwrap();
    assert!((r.fitted_rate + 4.0).abs() < 1e-3, "{}", r.fitted_rate);
    // the exponential fit of a power law is slow but negative
    let e = estimate_as_rate(&batch, 4.0).unwrap();
    assert!(e.fitted_rate < 0.0 && e.fitted_rate > -1.0);
}

#[test]
fn constant_path() {
    let c: f64 = 1.5;
    let batch = sampled_batch(1.0, 21.0, 1e-2, 100, |_| -c);
    for kind in [
        RateKind::MomentExponential,
        RateKind::AlmostSureExponential,
        RateKind::AlmostSurePolynomial,
    ] {
        let r = estimate(&batch, kind, 3.0, &EstimatorOptions::default()).unwrap();
        assert!(r.fitted_rate.abs() < 1e-12, "{kind:?}: {}", r.fitted_rate);
    }
    let avg = estimate_time_average(&batch, 3.0).unwrap();
    assert!((avg.fitted_rate - c.powi(3)).abs() < 1e-12);
    assert!(avg.series.iter().all(|(_, v)| (v - c.powi(3)).abs() < 1e-12));
    assert_eq!(avg.window, (1.0, 21.0));
}

#[test]
fn euler_decay_matches_discrete_oracle() {
    // EM on x' = −x gives x_k = x0 (1 − h)^k
    let h = 1e-3;
    let m = linear(-1.0, 1.0);
    let batch = run_batch(&m, &IntegratorConfig::new(11.0, h), 100, R1, 3).unwrap();
    let r = estimate_moment_rate(&batch, 2.0).unwrap();
    let oracle = 2.0 * (1.0 - h).ln() / h;
    assert!((r.fitted_rate - oracle).abs() < 1e-8, "{} vs {oracle}", r.fitted_rate);
    assert!((r.fitted_rate + 2.0).abs() < 1.5e-3);
}

#[test]
fn geometric_brownian_motion_pathwise_rate() {
    // log x² grows like 2(μ − σ²/2) t = 0.13 t
    let m = Preset::Example37
        .default_model()
        .isolate_regime(Regime::new(2))
        .unwrap();
    let cfg = IntegratorConfig::new(201.0, 0.01);
    let batch = run_batch(&m, &cfg, 200, R1, 11).unwrap();
    let r = estimate_as_rate(&batch, 2.0).unwrap();
    let median = r.quantiles[0].1;
    assert!((median - 0.13).abs() < 0.03, "median {median}");
    assert!(r.fitted_rate >= median);
    assert_eq!(r.quantiles.last().unwrap().1, r.fitted_rate);
}

#[test]
fn stderr_shrinks_like_inverse_root_n() {
    let m = Preset::Example37
        .default_model()
        .isolate_regime(Regime::new(2))
        .unwrap();
    let cfg = IntegratorConfig::new(m.t0 + 2.0, 0.01);
    let se: Vec<f64> = [500, 2000, 8000]
        .iter()
        .map(|&n| {
            estimate_moment_rate(&run_batch(&m, &cfg, n, R1, 21).unwrap(), 2.0)
                .unwrap()
                .stderr
        })
        .collect();
    for k in 0..2 {
        let ratio = se[k] / se[k + 1];
        assert!((ratio - 2.0).abs() < 0.4, "{se:?}");
    }
}

#[test]
fn example_3_4_time_average_is_small() {
    let m = Preset::Example34.default_model();
    let batch = run_batch(&m, &IntegratorConfig::new(30.0, 0.01), 100, R1, 9).unwrap();
    let r = estimate_time_average(&batch, 2.0).unwrap();
    assert!(r.fitted_rate <= 0.05 * 0.25, "{}", r.fitted_rate);
    assert_eq!(r.n_paths_used, 100);
}

fn cubic_growth() -> ModelSpec {
    let mut m = linear(0.0, 1.0);
    m.drift = vec![vec![CoefficientTerm::point(vec![Monomial::new(1.0, 3.0)])]];
    m.initial_segment = InitialSegment::constant_scalar(2.0);
    m
}

#[test]
fn exploded_paths_are_left_out_and_counted() {
    let cfg = IntegratorConfig::new(3.0, 1e-2);
    let good = sampled_batch(1.0, 3.0, 1e-2, 100, |t| (-t).exp());
    let bad = run_batch(&cubic_growth(), &cfg, 7, R1, 0).unwrap();
    assert_eq!(bad.n_exploded(), 7);
    let mut paths = good.paths().to_vec();
    paths.extend(bad.paths().iter().cloned());
    let mixed = SimulationBatch::from_paths(good.model.clone(), cfg, R1, 0, paths);
    let r = estimate_moment_rate(&mixed, 2.0).unwrap();
    assert_eq!((r.n_paths_used, r.n_exploded), (100, 7));
    assert!((r.fitted_rate + 2.0).abs() < 1e-3);

    assert_eq!(estimate_moment_rate(&bad, 2.0), Err(EstimatorError::AllExploded));
}

#[test]
fn error_cases() {
    let small = sampled_batch(1.0, 3.0, 1e-2, 10, |_| 1.0);
    assert_eq!(
        estimate_as_rate(&small, 2.0),
        Err(EstimatorError::TooFewPaths { have: 10, need: 100 })
    );
    let opts = EstimatorOptions {
        min_paths: 10,
        ..Default::default()
    };
    assert!(estimate(&small, RateKind::AlmostSureExponential, 2.0, &opts).is_ok());
    assert!(matches!(
        estimate(&small, RateKind::AlmostSurePolynomial, 2.0, &opts),
        Err(EstimatorError::HorizonTooShort(_))
    ));
    for p in [0.0, -1.0, f64::NAN] {
        assert_eq!(
            estimate(&small, RateKind::TimeAverage, p, &opts),
            Err(EstimatorError::InvalidPower)
        );
    }
    let coarse = sampled_batch(1.0, 2.0, 0.4, 10, |_| 1.0);
    assert!(matches!(
        estimate(&coarse, RateKind::MomentExponential, 2.0, &opts),
        Err(EstimatorError::DegenerateWindow(..))
    ));
}

#[test]
fn path_order_does_not_matter() {
    let m = Preset::Example35.default_model();
    let batch = run_batch(&m, &IntegratorConfig::new(6.0, 0.01), 120, R1, 4).unwrap();
    let mut reversed = batch.paths().to_vec();
    reversed.reverse();
    let rev = SimulationBatch::from_paths(m.clone(), batch.config.clone(), R1, 4, reversed);
    for kind in [
        RateKind::MomentExponential,
        RateKind::AlmostSureExponential,
        RateKind::TimeAverage,
    ] {
        let a = estimate(&batch, kind, 2.0, &EstimatorOptions::default()).unwrap();
        let b = estimate(&rev, kind, 2.0, &EstimatorOptions::default()).unwrap();
        let scale = a.fitted_rate.abs().max(1.0);
        assert!((a.fitted_rate - b.fitted_rate).abs() <= 1e-12 * scale, "{kind:?}");
        assert!(
            (a.stderr - b.stderr).abs() <= 1e-10 * a.stderr.abs().max(1e-12),
            "{kind:?}"
        );
    }
}

#[test]
fn kind_names_parse() {
    assert_eq!("moment".parse(), Ok(RateKind::MomentExponential));
    assert_eq!("as".parse(), Ok(RateKind::AlmostSureExponential));
    assert_eq!("avg".parse(), Ok(RateKind::TimeAverage));
    assert_eq!("poly".parse(), Ok(RateKind::AlmostSurePolynomial));
    assert!("mean".parse::<RateKind>().is_err());
}

#[test]
fn report_csv_layout() {
    let batch = sampled_batch(1.0, 1.04, 1e-2, 100, |_| 2.0);
    let r = estimate_as_rate(&batch, 1.0).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,statistic");
    assert_eq!(lines.len(), 1 + 5 + 6 + 3);
    assert!(lines[1].starts_with("1,"));
    assert!(lines.contains(&"n_paths_used,100"));
    assert!(lines.contains(&"n_exploded,0"));
    assert!(lines.iter().any(|l| l.starts_with("quantile_0.9,")));
    assert_eq!(r.statistic_at(1.021), Some(2f64.ln()));
}

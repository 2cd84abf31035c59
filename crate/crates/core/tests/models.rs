use approx::assert_relative_eq;
use hpsfde::models::{validate_local_lipschitz_probe, CoefficientTerm, Measure, ModelError, ModelSpec, Monomial};
use hpsfde::paths::{ConstantSegment, FnSegment, InitialSegment, KnotSegment};
use hpsfde::{GeneratorMatrix, Preset, Regime};

const R1: Regime = Regime::new(1);
const R2: Regime = Regime::new(2);

fn drift(m: &ModelSpec, seg: &impl hpsfde::Segment, t: f64, i: Regime) -> f64 {
    m.eval_drift(seg, t, i).unwrap()[0]
}

fn diffusion(m: &ModelSpec, seg: &impl hpsfde::Segment, t: f64, i: Regime) -> f64 {
    m.eval_diffusion(seg, t, i).unwrap()[(0, 0)]
}

fn wavy(theta_lower: f64) -> KnotSegment {
    let thetas: Vec<f64> = (0..7)
        .map(|k| theta_lower + (1.0 - theta_lower) * k as f64 / 6.0)
        .collect();
    KnotSegment {
        values: thetas.iter().map(|t| (7.0 * t).sin() * 0.8).collect(),
        thetas,
    }
}

#[test]
fn example_3_4_regime_2_at_unit_segment() {
    let m = Preset::Example34.model(&Measure::dirac(1.0).unwrap()).unwrap();
    let one = ConstantSegment::scalar(1.0, 0.5);
    assert_relative_eq!(drift(&m, &one, 0.0, R2), 0.05 + 0.05, epsilon = 1e-15);
    assert_relative_eq!(diffusion(&m, &one, 0.0, R2), 0.2, epsilon = 1e-15);
}

#[test]
fn example_3_7_regime_1_diffusion_at_unit_segment() {
    let m = Preset::Example37.default_model();
    let one = ConstantSegment::scalar(1.0, 0.75);
    for t in [1.0, 7.5, 40.0] {
        assert_relative_eq!(diffusion(&m, &one, t, R1), 0.2, epsilon = 1e-15);
    }
}

#[test]
fn zero_segment_gives_zero_coefficients() {
    for p in Preset::ALL {
        let m = p.default_model();
        let zero = ConstantSegment::scalar(0.0, p.theta_lower());
        for i in [R1, R2] {
            for t in [0.0, 1.0, 25.0] {
                assert_eq!(drift(&m, &zero, t, i), 0.0);
                assert_eq!(diffusion(&m, &zero, t, i), 0.0);
            }
        }
    }
}

#[test]
fn regime_2_reduces_to_geometric_brownian_motion() {
    // with ν₂ = δ₁ the kernel weight at θ = 1 is 1, so only φ(1) matters
    let m35 = Preset::Example35.default_model();
    let m37 = Preset::Example37.default_model();
    for c in [-1.5, -0.2, 0.3, 2.0] {
        for t in [1.0, 10.0] {
            let s35 = ConstantSegment::scalar(c, 0.7);
            let s37 = ConstantSegment::scalar(c, 0.75);
            assert_relative_eq!(drift(&m35, &s35, t, R2), 0.08 * c, max_relative = 1e-14);
            assert_relative_eq!(diffusion(&m35, &s35, t, R2), 0.1 * c, max_relative = 1e-14);
            assert_relative_eq!(drift(&m37, &s37, t, R2), 0.07 * c, max_relative = 1e-14);
            assert_relative_eq!(diffusion(&m37, &s37, t, R2), 0.1 * c.abs(), max_relative = 1e-14);
        }
    }
}

#[test]
fn example_3_4_against_direct_formula() {
    let nu = Measure::atoms(vec![(0.5, 0.25), (0.7, 0.5), (1.0, 0.25)]).unwrap();
    let m = Preset::Example34.model(&nu).unwrap();
    let seg = wavy(0.5);
    let phi = |theta: f64| {
        let mut out = [0.0];
        hpsfde::Segment::value_into(&seg, theta, &mut out);
        out[0]
    };
    for t in [1.0, 3.0, 12.0] {
        let k = |theta: f64| (-0.5 * (1.0 - theta) * t).exp();
        let int_abs = |pw: i32| -> f64 {
            [(0.5, 0.25), (0.7, 0.5), (1.0, 0.25)]
                .iter()
                .map(|&(th, w)| w * k(th) * phi(th).abs().powi(pw))
                .sum()
        };
        let x = phi(1.0);
        let f1 = -5.0 * x - 5.0 * x.powi(3) - 5.0 * x.powi(5) + 0.5 * int_abs(1);
        let f2 = 0.05 * x + 0.05 * int_abs(1);
        let g1 = 0.5 * x * x * int_abs(1);
        let g2 = 0.2 * int_abs(1);
        assert_relative_eq!(drift(&m, &seg, t, R1), f1, max_relative = 1e-13);
        assert_relative_eq!(drift(&m, &seg, t, R2), f2, max_relative = 1e-13);
        assert_relative_eq!(diffusion(&m, &seg, t, R1), g1, max_relative = 1e-13);
        assert_relative_eq!(diffusion(&m, &seg, t, R2), g2, max_relative = 1e-13);
    }
}

#[test]
fn linear_regime_is_positively_homogeneous() {
    let m = Preset::Example35.default_model();
    let seg = wavy(0.7);
    let base = drift(&m, &seg, 4.0, R2);
    for c in [0.1, 2.0, 37.0] {
        let scaled = KnotSegment {
            thetas: seg.thetas.clone(),
            values: seg.values.iter().map(|v| c * v).collect(),
        };
        assert_relative_eq!(drift(&m, &scaled, 4.0, R2), c * base, max_relative = 1e-14);
    }
}

#[test]
fn density_quadrature_converges_under_refinement() {
    let nu = Measure::uniform(0.5, 1.0).unwrap();
    let coarse = Preset::Example34.model(&nu).unwrap();
    let fine = Preset::Example34.model(&nu.refined(2)).unwrap();
    let seg = FnSegment {
        dim: 1,
        theta_lower: 0.5,
        f: |theta: f64, out: &mut [f64]| out[0] = (3.0 * theta).sin() + theta * theta,
    };
    for t in [1.0, 5.0, 10.0] {
        for i in [R1, R2] {
            let a = drift(&coarse, &seg, t, i);
            let b = drift(&fine, &seg, t, i);
            assert!((a - b).abs() < 1e-8, "drift at t = {t}: {a} vs {b}");
            let a = diffusion(&coarse, &seg, t, i);
            let b = diffusion(&fine, &seg, t, i);
            assert!((a - b).abs() < 1e-8, "diffusion {a} vs {b}");
        }
    }
}

#[test]
fn density_quadrature_is_fourth_order() {
    // late in the run the kernel e^{−β(1−θ)t} is steep and 64 intervals are
    // no longer enough for 1e-8, but each doubling still gains about 2⁴
    let nu = Measure::uniform(0.5, 1.0).unwrap();
    let one = ConstantSegment::scalar(1.0, 0.5);
    let t = 20.0;
    let g = |factor: usize| diffusion(&Preset::Example34.model(&nu.refined(factor)).unwrap(), &one, t, R2);
    let (a, b, c) = (g(1), g(2), g(4));
    let ratio = (a - b) / (b - c);
    assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    assert!((b - c).abs() < 1e-8);
}

#[test]
fn uniform_density_matches_closed_form() {
    // ∫ e^{−β(1−θ)t} dθ / (1 − θ̲) for φ ≡ 1
    let nu = Measure::uniform(0.5, 1.0).unwrap();
    let m = Preset::Example34.model(&nu).unwrap();
    let t = 4.0;
    let b: f64 = 0.5 * t;
    let exact = (1.0 - (-0.5 * b).exp()) / b / 0.5;
    let one = ConstantSegment::scalar(1.0, 0.5);
    assert_relative_eq!(diffusion(&m, &one, t, R2), 0.2 * exact, max_relative = 1e-9);
}

#[test]
fn preset_tables_match_hard_coded_constants() {
    let table = [
        (Preset::Example34, 0.5, Some(0.5), [[-1.0, 1.0], [2.0, -2.0]]),
        (Preset::Example35, 0.7, Some(0.6), [[-1.0, 1.0], [3.0, -3.0]]),
        (Preset::Example37, 0.75, None, [[-1.0, 1.0], [4.0, -4.0]]),
    ];
    for (p, lo, beta, gamma) in table {
        let m = p.default_model();
        assert_eq!(m.theta_lower, lo);
        assert_eq!(p.beta(), beta);
        assert_eq!(m.generator.rows(), gamma.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        assert_eq!(m.t0, 1.0);
        assert_eq!(m.initial_segment, InitialSegment::constant_scalar(0.5));
    }

    let point = |m: &ModelSpec, i: usize| -> Vec<(f64, f64)> {
        match &m.drift[i][0] {
            CoefficientTerm::Point { monomials } => monomials.iter().map(|m| (m.coefficient, m.power)).collect(),
            other => panic!("unexpected {other:?}"),
        }
    };
    let pant = |t: &CoefficientTerm| match t {
        CoefficientTerm::Pantograph(p) => (p.coefficient, p.point_exponent, p.delay_exponent),
        other => panic!("unexpected {other:?}"),
    };

    let m = Preset::Example34.default_model();
    assert_eq!(point(&m, 0), vec![(-5.0, 1.0), (-5.0, 3.0), (-5.0, 5.0)]);
    assert_eq!(pant(&m.drift[0][1]), (0.5, 0.0, 1.0));
    assert_eq!(point(&m, 1), vec![(0.05, 1.0)]);
    assert_eq!(pant(&m.drift[1][1]), (0.05, 0.0, 1.0));
    assert_eq!(pant(&m.diffusion[0][0].term), (0.5, 2.0, 1.0));
    assert_eq!(pant(&m.diffusion[1][0].term), (0.2, 0.0, 1.0));

    let m = Preset::Example35.default_model();
    assert_eq!(point(&m, 0), vec![(-6.0, 1.0), (-6.0, 3.0), (-6.0, 7.0)]);
    assert_eq!(pant(&m.drift[0][1]), (1.0, 0.0, 1.0));
    assert_eq!(point(&m, 1), vec![(0.04, 1.0)]);
    assert_eq!(pant(&m.drift[1][1]), (0.04, 0.0, 1.0));
    assert_eq!(pant(&m.diffusion[0][0].term), (0.5, 2.0, 2.0));
    assert_eq!(pant(&m.diffusion[1][0].term), (0.1, 0.0, 1.0));

    let m = Preset::Example37.default_model();
    assert_eq!(point(&m, 0), vec![(-6.0, 1.0), (-6.0, 3.0), (-6.0, 7.0)]);
    assert_eq!(pant(&m.drift[0][1]), (0.5, 0.0, 1.0));
    assert_eq!(point(&m, 1), vec![(0.04, 1.0)]);
    assert_eq!(pant(&m.drift[1][1]), (0.03, 0.0, 1.0));
    assert_eq!(pant(&m.diffusion[0][0].term), (0.2, 1.5, 2.5));
    assert_eq!(pant(&m.diffusion[1][0].term), (0.1, 0.0, 1.0));
}

#[test]
fn preset_models_round_trip_through_json() {
    for p in Preset::ALL {
        let m = p.default_model();
        let json = serde_json::to_string(&m).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}

#[test]
fn unsupported_measure_and_dimension_errors() {
    let nu = Measure::uniform(0.2, 1.0).unwrap();
    assert!(matches!(
        Preset::Example35.model(&nu),
        Err(ModelError::UnsupportedMeasure { .. })
    ));

    let m = Preset::Example34.default_model();
    let two = ConstantSegment {
        value: vec![1.0, 1.0],
        theta_lower: 0.5,
    };
    assert!(matches!(
        m.eval_drift(&two, 1.0, R1),
        Err(ModelError::DimensionMismatch(_))
    ));
    assert!(m
        .eval_drift(&ConstantSegment::scalar(1.0, 0.5), 1.0, Regime::new(3))
        .is_err());
}

fn single_regime(drift: Vec<CoefficientTerm>) -> ModelSpec {
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
fn lipschitz_probe_linear_model_is_one() {
    let m = single_regime(vec![CoefficientTerm::linear(1.0)]);
    for r in [0.01, 1.0, 100.0] {
        let probe = validate_local_lipschitz_probe(&m, r, 500, 3);
        assert!(probe.max_ratio <= 1.0 + 1e-9, "{probe:?}");
        assert!(!probe.flagged);
    }
}

#[test]
fn lipschitz_probe_flags_square_root() {
    let m = single_regime(vec![CoefficientTerm::point(vec![Monomial::new(1.0, 0.5)])]);
    let probe = validate_local_lipschitz_probe(&m, 1.0, 2000, 3);
    assert!(probe.flagged, "{probe:?}");
    assert!(probe.max_ratio > 100.0);
}

#[test]
fn lipschitz_probe_example_3_4_regime_1_baseline() {
    let m = Preset::Example34.default_model().isolate_regime(R1).unwrap();
    let probe = validate_local_lipschitz_probe(&m, 1.0, 2000, 7);
    assert!(probe.max_ratio.is_finite());
    assert!(!probe.flagged);
    // |f'| ≤ 5 + 15 + 25 from the polynomial plus 0.5 from the memory term,
    // plus 0.5·2 from the diffusion's |φ(1)|² prefactor
    assert!(probe.max_ratio <= 46.5, "{probe:?}");
    let again = validate_local_lipschitz_probe(&m, 1.0, 2000, 7);
    assert_eq!(probe, again);
    eprintln!("example_3_4 regime 1 probe baseline at R = 1: {:.4}", probe.max_ratio);
}

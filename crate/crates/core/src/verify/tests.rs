use super::*;
use crate::expectation::LsmcBackend;
use crate::lsmc::RegressionBasis;

fn coarse(nx: usize) -> BackendSpec {
    BackendSpec::Pde(PdeBackend { nx, ..Default::default() })
}

fn spec(g: GeneratorSpec<f64>, claim: TerminalClaim<f64>, expected: ExpectedVerdict) -> ScenarioSpec<f64> {
    ScenarioSpec {
        name: "t".into(),
        generator: g,
        claim,
        model: Model::brownian(1.0, 20).unwrap(),
        backend: coarse(201),
        quadrature: QuadratureRule::Uniform { count: 41 },
        tolerances: Tolerances::default(),
        expected,
    }
}

#[test]
fn verdict_rule() {
    let tol = Tolerances { margin_unequal: Some(0.1), ..Default::default() };
    assert_eq!(decide(0.005, 0.01, &tol), Verdict::Equal);
    assert_eq!(decide(0.2, 0.01, &tol), Verdict::Unequal);
    assert_eq!(decide(0.05, 0.01, &tol), Verdict::Inconclusive);
    // the margin must exceed the combined error to certify anything
    let loose = Tolerances { margin_unequal: Some(0.1), ..Default::default() };
    assert_eq!(decide(0.7, 0.2, &loose), Verdict::Inconclusive);
    assert_eq!(decide(0.5, 0.01, &Tolerances::default()), Verdict::Inconclusive);
}

#[test]
fn expected_verdict_must_follow_the_theorem() {
    let s = spec(GeneratorSpec::abs(0.5).unwrap(), TerminalClaim::tanh(1.0, 0.0, 1.0, 0.0), ExpectedVerdict::Unequal);
    assert!(matches!(s.validate(), Err(Error::Specification(_))));
    let s = spec(GeneratorSpec::smooth_nonhom(1.0).unwrap(), TerminalClaim::identity_clipped(6.0), ExpectedVerdict::Equal);
    assert!(matches!(s.validate(), Err(Error::Specification(_))));
    let s = spec(GeneratorSpec::smooth_nonhom(1.0).unwrap(), TerminalClaim::identity_clipped(6.0), ExpectedVerdict::Unequal);
    assert!(matches!(s.validate(), Err(Error::Configuration(_))));
    let s = spec(GeneratorSpec::linear(vec![0.3]).unwrap(), TerminalClaim::two_bump_default(), ExpectedVerdict::Equal);
    s.validate().unwrap();
    // single indicators are equal by definition for homogeneous drivers
    let s = spec(GeneratorSpec::abs(0.5).unwrap(), TerminalClaim::interval_indicator(0.0, 1.0), ExpectedVerdict::Equal);
    s.validate().unwrap();
}

#[test]
fn scenario_spec_round_trips_through_json() {
    let s = spec(GeneratorSpec::abs(0.5).unwrap(), TerminalClaim::two_bump_default(), ExpectedVerdict::Informational);
    let text = serde_json::to_string(&s).unwrap();
    let back: ScenarioSpec<f64> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.hash(), s.hash());
}

#[test]
fn zero_driver_cell_is_equal() {
    let s = spec(GeneratorSpec::zero(1), TerminalClaim::tanh(1.0, 0.0, 1.0, 0.0), ExpectedVerdict::Equal);
    let r = verify_representation(&s).unwrap();
    assert_eq!(r.verdict, Verdict::Equal, "{r:?}");
    assert!(r.matches);
    assert!(r.e_g.abs() < 1e-6, "E[tanh(W)] = 0 by symmetry, got {}", r.e_g);
}

#[test]
fn nonhomogeneous_driver_separates_on_identity() {
    let mut s = spec(
        GeneratorSpec::smooth_nonhom(1.0).unwrap(),
        TerminalClaim::identity_clipped(6.0),
        ExpectedVerdict::Unequal,
    );
    s.backend = coarse(401);
    s.tolerances.margin_unequal = Some(0.15);
    let r = verify_representation(&s).unwrap();
    // constant z = 1 gives E_g = g(1)·T
    assert!((r.e_g - (2f64.sqrt() - 1.0)).abs() < 1e-3, "{}", r.e_g);
    assert_eq!(r.verdict, Verdict::Unequal, "{r:?}");
    assert!(r.discrepancy > 0.15);
}

#[test]
fn report_serialisation_skips_runtime() {
    let s = spec(GeneratorSpec::zero(1), TerminalClaim::indicator(0.0), ExpectedVerdict::Equal);
    let r = verify_representation(&s).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert!(v.get("runtime").is_none());
    assert_eq!(v["verdict"], "EQUAL");
    assert_eq!(v["match"], true);
}

#[test]
fn additivity_for_abs_and_homogeneity() {
    let e = Engine::new(Model::brownian(1.0, 20).unwrap(), coarse(401));
    let g = GeneratorSpec::abs(0.5).unwrap();
    let phi = TerminalClaim::tanh(1.0, 0.0, 1.0, 0.0);
    let r = verify_additivity(&e, &g, &[phi.clone(), phi.clone()], 1e-3).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.homogeneity_defect.unwrap() <= r.bound);
    let r = verify_additivity(&e, &g, &[phi.clone(), TerminalClaim::identity_clipped(6.0)], 1e-3).unwrap();
    assert!(r.defect <= 2e-3, "{r:?}");
}

#[test]
fn additivity_preconditions() {
    let e = Engine::new(Model::brownian(1.0, 20).unwrap(), coarse(201));
    let phi = TerminalClaim::tanh(1.0, 0.0, 1.0, 0.0);
    let r = verify_additivity(&e, &GeneratorSpec::smooth_nonhom(1.0).unwrap(), &[phi.clone()], 1e-3);
    assert!(matches!(r, Err(Error::Configuration(_))));
    let r = verify_additivity(&e, &GeneratorSpec::abs(0.5).unwrap(), &[TerminalClaim::indicator(0.0)], 1e-3);
    assert!(matches!(r, Err(Error::Configuration(_))));
    let r = verify_additivity(&e, &GeneratorSpec::zero(1), &[phi.clone(), TerminalClaim::abs_value_clipped(3.0).scaled(-1.0)], 1e-3);
    assert!(matches!(r, Err(Error::Configuration(_))));
}

#[test]
fn nonhomogeneous_additivity_defect_is_visible() {
    let e = Engine::new(Model::brownian(1.0, 20).unwrap(), coarse(401));
    let g = GeneratorSpec::smooth_nonhom(1.0).unwrap();
    let id = TerminalClaim::identity_clipped(6.0);
    let r = measure_additivity(&e, &g, &[id.clone(), id], 0.0).unwrap();
    // z ≡ 1 and z ≡ 2: g(2) − 2g(1) = √5 − 1 − 2(√2 − 1)
    let want = 5f64.sqrt() - 1.0 - 2.0 * (2f64.sqrt() - 1.0);
    assert!((r.defect - want.abs()).abs() < 5e-3, "{} vs {want}", r.defect);
    assert!(!r.pass);
}

#[test]
fn brownian_probe_scaling_defect_closed_form() {
    let p = BrownianProbe { lambdas: vec![1.0, 2.0], ..Default::default() };
    let r = necessity_probe_brownian(&GeneratorSpec::smooth_nonhom(1.0).unwrap(), &p, 1e-6).unwrap();
    let want = (5f64.sqrt() - 1.0 - 2.0 * (2f64.sqrt() - 1.0)).abs() * p.eps;
    for row in &r.rows {
        if row.lambda == 1.0 {
            assert!(row.scaling_defect < 1e-12);
        } else {
            assert!((row.scaling_defect - want).abs() < 1e-9, "{} vs {want}", row.scaling_defect);
        }
        assert!(row.translation_defect < 1e-9);
        assert!((row.e_base - row.y - (2f64.sqrt() - 1.0) * p.eps).abs() < 1e-9);
    }
    assert!(!r.pass);
    let r = necessity_probe_brownian(&GeneratorSpec::abs(0.5).unwrap(), &p, 1e-9).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn brownian_probe_rejects_off_grid_window() {
    let p = BrownianProbe { t: 0.33, ..Default::default() };
    assert!(matches!(necessity_probe_brownian(&GeneratorSpec::<f64>::zero(1), &p, 1e-6), Err(Error::Input(_))));
}

#[test]
fn brownian_probe_choquet_matches_for_abs() {
    let p = BrownianProbe {
        ys: vec![0.0],
        lambdas: vec![1.0],
        nx: 201,
        quadrature: Some(QuadratureRule::Uniform { count: 41 }),
        ..Default::default()
    };
    let r: BrownianProbeReport<f64> = necessity_probe_brownian(&GeneratorSpec::abs(0.5).unwrap(), &p, 1e-9).unwrap();
    let row = &r.rows[0];
    assert!((row.c_base.unwrap() - row.e_base).abs() < 0.05, "{row:?}");
}

#[test]
fn indicator_probe_linear_is_equal_everywhere() {
    let p = IndicatorProbe { backend: coarse(401), ..Default::default() };
    let r = necessity_probe_indicators(&GeneratorSpec::linear(vec![0.3]).unwrap(), &p).unwrap();
    assert_eq!(r.rows.len(), 4);
    for row in &r.rows {
        assert!(row.predicted_equal);
        assert_eq!(row.verdict, Verdict::Equal, "{row:?}");
    }
}

#[test]
fn indicator_probe_single_indicator_is_equal() {
    let p = IndicatorProbe { l1: 1.0, l2: 0.0, backend: coarse(401), ..Default::default() };
    let r = necessity_probe_indicators(&GeneratorSpec::abs(0.5).unwrap(), &p).unwrap();
    assert_eq!(r.rows.len(), 2);
    for row in &r.rows {
        assert_eq!(row.verdict, Verdict::Equal, "{row:?}");
    }
}

#[test]
fn indicator_probe_needs_ordered_interval() {
    let p = IndicatorProbe { a: 1.0, b: 0.0, ..Default::default() };
    assert!(necessity_probe_indicators(&GeneratorSpec::<f64>::zero(1), &p).is_err());
}

#[test]
fn empty_and_single_cell_matrices() {
    let (summary, reports) = run_scenario_matrix::<f64>(&[]).unwrap();
    assert!(summary.rows.is_empty() && reports.is_empty() && summary.all_match());
    let s = spec(GeneratorSpec::abs(0.5).unwrap(), TerminalClaim::indicator(0.0), ExpectedVerdict::Equal);
    let (summary, _) = run_scenario_matrix(&[s]).unwrap();
    assert_eq!(summary.rows.len(), 1);
    assert!(summary.all_match());
    let mut buf = Vec::new();
    summary.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().ends_with("EQUAL,equal,true"));
}

#[test]
fn default_matrix_shape_and_consistency() {
    let m = default_matrix();
    assert_eq!(m.len(), 30);
    for s in &m {
        s.validate().unwrap();
    }
    let equal = m.iter().filter(|s| s.expected == ExpectedVerdict::Equal).count();
    // zero and linear on all six claims, abs and pos_part on four monotone claims
    assert_eq!(equal, 20);
    let unequal = m.iter().filter(|s| s.expected == ExpectedVerdict::Unequal).count();
    // smooth_nonhom on identity, abs and pos_part on two_bump
    assert_eq!(unequal, 3);
}

#[test]
fn lsmc_cell_runs_with_shared_paths() {
    let mut s = spec(GeneratorSpec::abs(0.5).unwrap(), TerminalClaim::interval_indicator(0.0, 1.0), ExpectedVerdict::Equal);
    s.backend = BackendSpec::Lsmc(LsmcBackend { n_paths: 20_000, seed: 1, basis: RegressionBasis::Auto });
    let r = verify_representation(&s).unwrap();
    assert_eq!(r.verdict, Verdict::Equal, "{r:?}");
}

use super::*;
use crate::control::synthesize_omega_atom;
use crate::dynamics::{simulate_storage, time_reverse_drive};

fn lossless(gamma: f64) -> MemoryParams {
    MemoryParams::lossless_with_rate(gamma, 1e3, 0.0)
}

#[test]
fn grid_spacings() {
    let u = ControlGrid::zeros(0.0, 2.0, 5, Spacing::Uniform, Interpolation::Cubic).unwrap();
    assert_eq!(u.knots(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
    let d = ControlGrid::zeros(0.0, 1.0, 20, Spacing::DenseAtEnd, Interpolation::Cubic).unwrap();
    let gaps: Vec<f64> = d.knots().windows(2).map(|w| w[1] - w[0]).collect();
    for (i, w) in gaps.windows(2).enumerate() {
        let expect = if i + 1 < 9 { 1.0 } else { DENSE_RATIO };
        assert!((w[1] / w[0] - expect).abs() < 1e-9, "{i}");
    }
    assert_eq!(d.window(), (0.0, 1.0));
    assert!(ControlGrid::zeros(0.0, 1.0, 3, Spacing::Uniform, Interpolation::Cubic).is_err());
    assert!(ControlGrid::zeros(0.0, 1.0, 3, Spacing::Uniform, Interpolation::Linear).is_ok());
}

#[test]
fn interpolation_kinds() {
    let g = ControlGrid::new(
        vec![0.0, 1.0, 2.0, 3.0],
        [0.0, 1.0, 0.0, 1.0].iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        Interpolation::Linear,
        Spacing::Uniform,
    )
    .unwrap();
    assert!((g.omega(0.25).re - 0.25).abs() < 1e-15);
    let d = g.to_drive().unwrap();
    assert!((d.omega(1.5).re - 0.5).abs() < 1e-3);
}

#[test]
fn objective_matches_simulation() {
    let shape = benchmark_shape(ShapeKind::Sech, 1.0).unwrap();
    let (t1, t2) = shape.domain();
    let mut g = ControlGrid::zeros(t1, t2, 33, Spacing::Uniform, Interpolation::Cubic).unwrap();
    g = g
        .with_values(g.knots().iter().map(|&t| Complex64::new(1.0 + 0.3 * t, 0.2 * t)).collect())
        .unwrap();
    let params = lossless(1.0);
    let obj = Objective::new(&shape, &params, ModelTier::AtomLimitedLossless, &g, &OctOptions::default()).unwrap();
    let drive = g.to_drive().unwrap();
    let phi_s = storage_input(&shape, (t1, t2)).unwrap();
    let (_, eta_sim) = simulate_storage(&drive, &phi_s, &params, ModelTier::AtomLimitedLossless).unwrap();
    let eta_ad = obj.eta_adaptive(&g).unwrap();
    assert!((eta_ad - eta_sim).abs() < 1e-9, "{eta_ad} vs {eta_sim}");
    assert!((obj.eta(&obj.plan(&g).unwrap(), &g) - eta_ad).abs() < 1e-6);
}

#[test]
fn gauge_invariance() {
    let shape = benchmark_shape(ShapeKind::Gaussian, 1.0).unwrap();
    let (t1, t2) = shape.domain();
    let g = ControlGrid::zeros(t1, t2, 17, Spacing::Uniform, Interpolation::Cubic).unwrap();
    let g = g.with_values(g.knots().iter().map(|&t| Complex64::new(1.0, 0.5 * t)).collect()).unwrap();
    let params = lossless(0.8);
    let base = storage_efficiency(&shape, &params, ModelTier::AtomLimitedLossless, &g).unwrap();
    for chi in [0.3, 1.0, -2.0] {
        let rot = storage_efficiency(&shape, &params, ModelTier::AtomLimitedLossless, &g.rotated(chi)).unwrap();
        assert!((rot - base).abs() < 1e-10);
    }
}

#[test]
fn seeded_run_never_degrades() {
    let shape = benchmark_shape(ShapeKind::Sech, 1.0).unwrap();
    let gamma = 1.2 / shape.time_variance().unwrap();
    let params = lossless(gamma);
    let r = optimize_c(&shape, gamma).unwrap();
    let retrieval = synthesize_omega_atom(&r.map, 0.0, gamma).unwrap();
    let (t1, t2) = shape.domain();
    let seed = time_reverse_drive(&retrieval, t1, t2).unwrap();
    let grid = ControlGrid::zeros(t1, t2, 33, Spacing::Uniform, Interpolation::Cubic).unwrap();
    let opts = OctOptions {
        restarts: 0,
        max_iterations: 20,
        ..OctOptions::default()
    };
    let obj = Objective::new(&shape, &params, ModelTier::AtomLimitedLossless, &grid, &opts).unwrap();
    let sg = grid.sample_drive(&seed).unwrap();
    let start = obj.eta(&obj.plan(&sg).unwrap(), &sg);
    let res = oct_optimize(&shape, &params, ModelTier::AtomLimitedLossless, &grid, Some(&seed), &opts).unwrap();
    assert!(res.eta_objective >= start);
    assert_eq!(res.runs.len(), 1);
}

#[test]
fn rejects_unsupported_inputs() {
    let shape = benchmark_shape(ShapeKind::Sech, 1.0).unwrap();
    let (t1, t2) = shape.domain();
    let g = ControlGrid::zeros(t1, t2, 9, Spacing::Uniform, Interpolation::Cubic).unwrap();
    let p = lossless(1.0);
    assert!(oct_optimize(&shape, &p, ModelTier::Full, &g, None, &OctOptions::default()).is_err());
    let inf = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
    assert!(oct_optimize(&inf, &p, ModelTier::AtomLimitedLossless, &g, None, &OctOptions::default()).is_err());
}

#[test]
fn scenario_round_trip() {
    let s = OctScenario::from_json(r#"{"shape": "sech", "gamma_tc": 1.2, "knots": 17, "spacing": "dense-at-end"}"#).unwrap();
    assert_eq!(s.spacing, Spacing::DenseAtEnd);
    assert_eq!(s.interpolation, Interpolation::Cubic);
    assert!(OctScenario::from_json(r#"{"shape": "sech", "bogus": 1}"#).is_err());
    let both = OctScenario::from_json(r#"{"shape": "sech", "gamma": 1.0, "gamma_tc": 1.2}"#).unwrap();
    assert!(both.run().is_err());
}

#[test]
fn small_grid_approaches_ansatz() {
    let shape = benchmark_shape(ShapeKind::Sech, 1.0).unwrap();
    let gamma = 1.2 / shape.time_variance().unwrap();
    let (t1, t2) = shape.domain();
    let grid = ControlGrid::zeros(t1, t2, 25, Spacing::Uniform, Interpolation::Cubic).unwrap();
    let opts = OctOptions {
        restarts: 1,
        max_iterations: 200,
        ..OctOptions::default()
    };
    let res = oct_optimize(&shape, &lossless(gamma), ModelTier::AtomLimitedLossless, &grid, None, &opts).unwrap();
    let ansatz = optimize_c(&shape, gamma).unwrap().eta;
    assert!(res.eta <= ansatz + 1e-3, "{} vs {ansatz}", res.eta);
    assert!(res.eta > ansatz - 0.05, "{} vs {ansatz}", res.eta);
}

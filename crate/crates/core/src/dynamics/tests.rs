use super::*;
use crate::control::{
    optimize_c, synthesize_omega_atom, synthesize_omega_cavity, DriveSegment, Impulse, PostTcMode,
};
use crate::shapes::ShapeKind;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn lossless(gamma: f64) -> MemoryParams {
    MemoryParams::lossless_with_rate(gamma, 1e3, 0.0)
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn round_trip(shape: &PulseShape, gamma: f64) -> (f64, f64, Trajectory) {
    let r = optimize_c(shape, gamma).unwrap();
    let drive = synthesize_omega_atom(&r.map, 0.0, gamma).unwrap();
    let (t1, t2) = drive.window();
    let traj = simulate_retrieval(&drive, &lossless(gamma), ModelTier::AtomLimitedLossless, t1, t2, one()).unwrap();
    (r.eta, overlap_efficiency(&traj, shape).unwrap(), traj)
}

fn random_drive(rng: &mut ChaCha8Rng, window: (f64, f64)) -> ControlDrive {
    let n = rng.gen_range(6..16);
    let t: Vec<f64> = (0..n).map(|i| window.0 + (window.1 - window.0) * i as f64 / (n - 1) as f64).collect();
    let v: Vec<Complex64> = t
        .iter()
        .map(|_| Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
        .collect();
    let seg = DriveSegment::new(t, v).unwrap();
    let k = rng.gen_range(0..3);
    let impulses = (0..k)
        .map(|_| Impulse {
            t: rng.gen_range(window.0..window.1),
            area: rng.gen_range(0.0..FRAC_PI_2),
            phase: rng.gen_range(-PI..PI),
            coupling: crate::control::ImpulseCoupling::SpinPolarization,
        })
        .collect();
    ControlDrive::new(window, vec![seg], impulses, PostTcMode::Zero, vec![], vec![]).unwrap()
}

#[test]
fn undriven_retrieval_keeps_spin() {
    let d = ControlDrive::zero((0.0, 5.0)).unwrap();
    let tr = simulate_retrieval(&d, &lossless(1.0), ModelTier::AtomLimitedLossless, 0.0, 5.0, one()).unwrap();
    for s in tr.samples() {
        assert_eq!(s.s, one());
        assert_eq!(s.e_out, Complex64::new(0.0, 0.0));
    }
}

#[test]
fn impulse_then_free_decay() {
    let imp = Impulse {
        t: 0.0,
        area: FRAC_PI_2,
        phase: 0.0,
        coupling: crate::control::ImpulseCoupling::SpinPolarization,
    };
    let d = ControlDrive::zero((0.0, 40.0)).unwrap().with_impulses(vec![imp]).unwrap();
    let tr = simulate_retrieval(&d, &lossless(1.0), ModelTier::AtomLimitedLossless, 0.0, 40.0, one()).unwrap();
    for t in [0.1, 0.5, 2.0, 5.0] {
        let e = tr.sample(t).e_out;
        assert_relative_eq!(e.norm(), 2f64.sqrt() * (-t).exp(), max_relative = 1e-8);
    }
    let target = PulseShape::new(ShapeKind::DecreasingExp, 0.25).unwrap();
    assert_relative_eq!(overlap_efficiency(&tr, &target).unwrap(), 8.0 / 9.0, max_relative = 1e-8);
}

#[test]
fn retrieval_reproduces_map_efficiency() {
    let cases = [
        (ShapeKind::Sech, 0.6),
        (ShapeKind::Sech, 0.2),
        (ShapeKind::Sech, 3.0),
        (ShapeKind::Gaussian, 1.0),
        (ShapeKind::IncreasingExp, 0.8),
        (ShapeKind::DecreasingExp, 0.3),
    ];
    for (kind, g) in cases {
        let s = PulseShape::new(kind, 1.0).unwrap();
        let (eta, sim, tr) = round_trip(&s, g);
        assert!((eta - sim).abs() < 1e-4, "{kind} Γτ={g}: map {eta} sim {sim}");
        assert!(tr.max_conservation_residual() < 1e-8, "{kind}");
    }
}

#[test]
fn truncated_round_trip() {
    let w = 3f64.sqrt() * PI;
    let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap().truncate(-0.5 * w, 0.5 * w).unwrap();
    let (eta, sim, _) = round_trip(&s, 1.5);
    assert!((eta - sim).abs() < 1e-4, "map {eta} sim {sim}");
}

#[test]
fn spin_depletes_monotonically() {
    let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
    let (_, _, tr) = round_trip(&s, 0.6);
    let v: Vec<f64> = tr.samples().iter().map(|x| x.s.norm_sqr()).collect();
    for w in v.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn storage_equals_retrieval_for_random_drives() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let window = (-2.0, 2.0);
    let target = PulseShape::new(ShapeKind::Sech, 0.8).unwrap().truncate(-2.0, 2.0).unwrap();
    let phi_s = storage_input(&target, window).unwrap();
    for tier in [ModelTier::AtomLimitedLossless, ModelTier::Full] {
        let params = MemoryParams::new(5.0, 20.0, 0.0, 0.0, 0.3);
        for _ in 0..4 {
            let d = random_drive(&mut rng, window);
            let tr = simulate_retrieval(&d, &params, tier, window.0, window.1, one()).unwrap();
            let eta_r = overlap_efficiency(&tr, &target).unwrap();
            let rev = time_reverse_drive(&d, window.0, window.1).unwrap();
            let (_, eta_s) = simulate_storage(&rev, &phi_s, &params, tier).unwrap();
            assert!((eta_r - eta_s).abs() < 1e-8, "{tier:?}: {eta_r} vs {eta_s}");
        }
    }
}

#[test]
fn undriven_storage_is_empty() {
    let target = PulseShape::new(ShapeKind::Sech, 1.0).unwrap().truncate(-3.0, 3.0).unwrap();
    let d = ControlDrive::zero((-3.0, 3.0)).unwrap();
    let (_, eta) = simulate_storage(&d, &target, &lossless(1.0), ModelTier::AtomLimitedLossless).unwrap();
    assert_eq!(eta, 0.0);
}

#[test]
fn lossy_ratio_matches_rescaling() {
    let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
    // κ_in = 50, C = 1: g² = κγ
    let params = MemoryParams::new((50.0f64 * 0.4).sqrt(), 50.0, 0.0, 0.4, 0.0);
    let gt = params.derived().unwrap().gamma_tilde;
    let r = optimize_c(&s, gt).unwrap();
    let drive = synthesize_omega_atom(&r.map, 0.0, gt).unwrap();
    let (t1, t2) = drive.window();
    let lossy = simulate_retrieval(&drive, &params, ModelTier::AtomLimited, t1, t2, one()).unwrap();
    let clean = simulate_retrieval(&drive, &params, ModelTier::AtomLimitedLossless, t1, t2, one()).unwrap();
    let ratio = overlap_efficiency(&lossy, &s).unwrap() / overlap_efficiency(&clean, &s).unwrap();
    assert_relative_eq!(ratio, 0.5, max_relative = 1e-6);
    assert!(lossy.max_conservation_residual() < 1e-8);
    assert_relative_eq!(params.loss_rescale(overlap_efficiency(&clean, &s).unwrap()).unwrap(), overlap_efficiency(&lossy, &s).unwrap(), max_relative = 1e-6);
}

#[test]
fn cavity_regime_matches_atom_regime() {
    let rate = 0.8;
    let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
    let r = optimize_c(&s, rate).unwrap();
    let atom = synthesize_omega_atom(&r.map, 0.0, rate).unwrap();
    let (t1, t2) = atom.window();
    let ta = simulate_retrieval(&atom, &lossless(rate), ModelTier::AtomLimitedLossless, t1, t2, one()).unwrap();
    // κ = rate, Γ = 200 κ
    let params = MemoryParams::new((200.0f64).sqrt() * rate, rate, 0.0, 0.0, 0.0);
    let cav = synthesize_omega_cavity(&r.map, &params).unwrap();
    assert!(matches!(cav.post_tc_mode(), PostTcMode::Decouple { .. }));
    let tc = simulate_retrieval(&cav, &params, ModelTier::CavityLimitedSpecial, t1, t2, one()).unwrap();
    let ea = overlap_efficiency(&ta, &s).unwrap();
    let ec = overlap_efficiency(&tc, &s).unwrap();
    assert!((ea - ec).abs() < 1e-4, "{ea} vs {ec}");
    assert!((ec - r.eta).abs() < 1e-4);
    for t in [-1.0, 0.0, 0.5] {
        assert!((ta.sample(t).e_out.norm() - tc.sample(t).e_out.norm()).abs() < 1e-3);
    }
    assert!(tc.max_conservation_residual() < 1e-8, "{}", tc.max_conservation_residual());
}

#[test]
fn cavity_tier_tracks_full_model() {
    let kappa = 1.0;
    let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
    let r = optimize_c(&s, kappa).unwrap();
    let params = MemoryParams::new(30.0, kappa, 0.0, 9.0, 0.0);
    let d = synthesize_omega_cavity(&r.map, &params).unwrap();
    let (t1, t2) = d.window();
    let full = simulate_retrieval(&d, &params, ModelTier::Full, t1, t2, one()).unwrap();
    let cav = simulate_retrieval(&d, &params, ModelTier::CavityLimited, t1, t2, one()).unwrap();
    let (ef, ec) = (overlap_efficiency(&full, &s).unwrap(), overlap_efficiency(&cav, &s).unwrap());
    assert!((ef - ec).abs() < 2e-3, "{ef} vs {ec}");
    assert!((loss_probability(&full, 9.0) - loss_probability(&cav, 9.0)).abs() < 1e-3);
}

#[test]
fn cavity_loss_probability_scales_as_inverse_cooperativity() {
    let kappa = 2.0;
    let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
    let r = optimize_c(&s, kappa).unwrap();
    // C = 100 with Γ τ = 100
    let g = (100.0f64 * kappa).sqrt();
    let gamma = g * g / (kappa * 100.0);
    let params = MemoryParams::new(g, kappa, 0.0, gamma, 0.0);
    let d = synthesize_omega_cavity(&r.map, &params).unwrap();
    let (t1, t2) = d.window();
    let tr = simulate_retrieval(&d, &params, ModelTier::CavityLimited, t1, t2, one()).unwrap();
    let pg = loss_probability(&tr, gamma);
    assert!(pg > 0.01 / 3.0 && pg < 0.03, "P_γ = {pg}");
    assert_eq!(loss_probability(&tr, 0.0), 0.0);
    assert!(tr.max_conservation_residual() < 1e-8);
}

#[test]
fn finite_decoupling_converges() {
    let kappa = 1.0;
    let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
    let r = optimize_c(&s, kappa).unwrap();
    let params = MemoryParams::new(16.0, kappa, 0.0, 0.0, 0.0);
    let d = synthesize_omega_cavity(&r.map, &params).unwrap();
    let (t1, t2) = d.window();
    let run = |m: f64| {
        let opts = SimOptions {
            decouple: DecoupleModel::FiniteM(m),
            ..SimOptions::default()
        };
        let tr = simulate_retrieval_with(&d, &params, ModelTier::Full, t1, t2, one(), &opts).unwrap();
        overlap_efficiency(&tr, &s).unwrap()
    };
    let e100 = run(100.0);
    let e1000 = run(1000.0);
    assert!((e100 - e1000).abs() < 1e-4, "{e100} vs {e1000}");
}

#[test]
fn adiabatic_gap_shrinks_with_cavity_rate() {
    let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
    let gamma = 0.6;
    let r = optimize_c(&s, gamma).unwrap();
    let drive = synthesize_omega_atom(&r.map, 0.0, gamma).unwrap();
    let gap = |kappa: f64| {
        let params = MemoryParams::lossless_with_rate(gamma, kappa, 0.0);
        adiabatic_validity(&drive, &params, ModelTier::AtomLimitedLossless, &s).unwrap()
    };
    let g100 = gap(100.0);
    let g10 = gap(10.0);
    assert!(g100.gap < 0.02, "{g100:?}");
    let ratio = g10.gap / g100.gap;
    assert!(ratio > 5.0 && ratio < 20.0, "ratio {ratio}");
    assert_relative_eq!(g100.predicted_scale, 0.01);
}

#[test]
fn cavity_tier_requires_loss_or_detuning() {
    let d = ControlDrive::zero((0.0, 1.0)).unwrap();
    let p = MemoryParams::new(1.0, 1.0, 0.0, 0.0, 0.0);
    assert!(simulate_retrieval(&d, &p, ModelTier::CavityLimited, 0.0, 1.0, one()).is_err());
    assert!(simulate_retrieval(&d, &p, ModelTier::Full, 0.0, 1.0, Complex64::new(2.0, 0.0)).is_err());
}

#[test]
fn trajectory_csv_has_header_and_rows() {
    let d = ControlDrive::constant((0.0, 1.0), Complex64::new(1.0, 0.0)).unwrap();
    let tr = simulate_retrieval(&d, &lossless(1.0), ModelTier::AtomLimitedLossless, 0.0, 1.0, one()).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,re_e"));
    assert_eq!(text.lines().count(), tr.grid.len() + 1);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(8))]

    #[test]
    fn lossless_conservation(seed in 0u64..1000, tier in proptest::sample::select(vec![ModelTier::AtomLimitedLossless, ModelTier::Full])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_drive(&mut rng, (0.0, 3.0));
        let params = MemoryParams::new(3.0, 10.0, 0.0, 0.0, rng.gen_range(-1.0..1.0));
        let tr = simulate_retrieval(&d, &params, tier, 0.0, 3.0, one()).unwrap();
        proptest::prop_assert!(tr.max_conservation_residual() < 1e-8);
        let v: Vec<f64> = tr.samples().iter().map(|x| x.s.norm()).collect();
        proptest::prop_assert!(v.iter().all(|&s| s <= 1.0 + 1e-9));
    }
}




use super::*;
use crate::asymptotics::{dec_exp_exact_eta, inc_exp_eta};
use crate::shapes::ShapeKind;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn shape(kind: ShapeKind) -> PulseShape {
    PulseShape::new(kind, 1.0).unwrap()
}

fn eta_at(shape: &PulseShape, rate: f64, c: f64) -> f64 {
    overlap_eta(&single_tc_map(shape, rate, c).unwrap()).unwrap()
}

#[test]
fn dec_exp_closed_form() {
    let s = shape(ShapeKind::DecreasingExp);
    for x in [0.1, 0.25, 0.4] {
        let r = optimize_c(&s, x).unwrap();
        assert!((r.eta - dec_exp_exact_eta(x, 1.0)).abs() < 1e-9, "Γτ={x}: {}", r.eta);
        assert_eq!(r.map.critical_times, vec![0.0]);
        assert_relative_eq!(r.c, (2.0 * x).sqrt(), max_relative = 1e-12);
    }
    for x in [0.5, 1.0, 5.0] {
        assert!((optimize_c(&s, x).unwrap().eta - 1.0).abs() < 1e-8);
    }
}

#[test]
fn inc_exp_matches_formula() {
    let s = shape(ShapeKind::IncreasingExp);
    let r = optimize_c(&s, 1.0).unwrap();
    assert!((r.eta - 27.0 / 32.0).abs() < 1e-9, "{}", r.eta);
    for x in [0.6, 2.0, 15.0] {
        let r = optimize_c(&s, x).unwrap();
        assert!((r.eta - inc_exp_eta(x)).abs() < 1e-8, "Γτ={x}");
    }
}

#[test]
fn sech_adiabatic_has_no_critical_time() {
    let s = shape(ShapeKind::Sech);
    assert_eq!(find_critical_time(&s, 10.0, 1.0).unwrap(), None);
    let r = optimize_c(&s, 10.0).unwrap();
    assert_eq!(r.c, 1.0);
    assert_relative_eq!(r.eta, 1.0, epsilon = 1e-12);
}

#[test]
fn dec_exp_violates_at_start() {
    let s = shape(ShapeKind::DecreasingExp);
    assert_eq!(find_critical_time(&s, 0.3, 1.0).unwrap(), Some(0.0));
}

#[test]
fn rejects_bad_inputs() {
    let s = shape(ShapeKind::Sech);
    assert!(find_critical_time(&s, 0.0, 1.0).is_err());
    assert!(find_critical_time(&s, 1.0, -1.0).is_err());
}

#[test]
fn saturation_stationarity_and_fixed_point() {
    let cases = [
        (ShapeKind::Sech, 0.6),
        (ShapeKind::Sech, 1.2),
        (ShapeKind::Gaussian, 0.3),
        (ShapeKind::Gaussian, 1.2),
        (ShapeKind::Lorentzian, 0.6),
        (ShapeKind::IncreasingExp, 0.8),
    ];
    for (kind, rate) in cases {
        let s = shape(kind);
        let r = optimize_c(&s, rate).unwrap();
        let tc = r.map.critical_times[0];
        let d = constraint(&s, rate, r.c, tc);
        assert!(d.abs() < 1e-9 * rate, "{kind}: D(tc) = {d}");
        for t in s.scan_grid(400).into_iter().filter(|&t| t < tc - 1e-6) {
            assert!(constraint(&s, rate, r.c, t) > 0.0);
        }
        assert_relative_eq!(r.c, 1.0 / r.eta.sqrt(), max_relative = 1e-8);
        for f in [0.99, 1.01] {
            assert!(eta_at(&s, rate, r.c * f) <= r.eta + 1e-12, "{kind} stationarity");
        }
    }
}

#[test]
fn exact_relation_at_critical_time() {
    // |φ(t_c)|² = 2R φ*(t_c) ∫_{t_c}^{t2} φ e^{−R(t − t_c)} dt at the fixed point
    for (kind, rate) in [(ShapeKind::Sech, 0.6), (ShapeKind::Gaussian, 0.8), (ShapeKind::IncreasingExp, 1.0)] {
        let s = shape(kind);
        let r = optimize_c(&s, rate).unwrap();
        let tc = r.map.critical_times[0];
        let p = s.eval(tc);
        let tail = s.exp_overlap(tc, s.t2(), rate).unwrap().conj();
        let rhs = 2.0 * rate * (p.conj() * tail).re;
        assert_relative_eq!(p.norm_sqr(), rhs, max_relative = 1e-7);
    }
}

#[test]
fn map_invariants() {
    let s = shape(ShapeKind::Sech);
    let r = optimize_c(&s, 0.6).unwrap();
    let m = &r.map;
    let tc = m.critical_times[0];
    assert_relative_eq!(m.eval(tc - 1e-12).norm(), m.eval(tc + 1e-12).norm(), max_relative = 1e-9);
    assert!(m.total_norm() <= 1.0 + 1e-12);
    for t in s.scan_grid(500) {
        assert!(m.denominator(t) > -1e-10, "t={t}");
    }
}

#[test]
fn overlap_of_identity_map() {
    let s = shape(ShapeKind::Gaussian).truncate(-3.0, 3.0).unwrap();
    let m = single_tc_map(&s, 1e4, 1.0).unwrap();
    assert!(m.critical_times.len() <= 1);
    let s = shape(ShapeKind::Gaussian);
    let m = single_tc_map(&s, 50.0, 1.0).unwrap();
    assert!(m.critical_times.is_empty());
    assert_relative_eq!(overlap_eta(&m).unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn c_leq_one_baseline() {
    let s = shape(ShapeKind::DecreasingExp);
    let (c, eta) = c_leq_one_eta(&s, 0.25).unwrap();
    assert_relative_eq!(eta, 0.5, max_relative = 1e-10);
    assert_relative_eq!(c * c, eta);
    assert_eq!(c_leq_one_eta(&shape(ShapeKind::Sech), 10.0).unwrap(), (1.0, 1.0));
    let s = shape(ShapeKind::Sech);
    assert!(c_leq_one_eta(&s, 0.6).unwrap().1 < optimize_c(&s, 0.6).unwrap().eta);
}

#[test]
fn two_critical_times_for_lorentzian() {
    let s = shape(ShapeKind::Lorentzian);
    for rate in [0.3, 0.6, 0.85] {
        let one = optimize_c(&s, rate).unwrap();
        let two = two_tc_map(&s, rate).unwrap();
        assert!(!two.fell_back, "rate {rate}");
        assert!(two.eta >= one.eta, "rate {rate}: {} < {}", two.eta, one.eta);
        assert_eq!(two.map.critical_times.len(), 2);
        assert_relative_eq!(two.map.total_norm(), 1.0, epsilon = 1e-9);
    }
    let two = two_tc_map(&s, 0.95).unwrap();
    assert!((two.eta - 1.0).abs() < 1e-8);
    let two = two_tc_map(&shape(ShapeKind::Sech), 10.0).unwrap();
    assert!(two.fell_back);
    assert_eq!(two.eta, 1.0);
}

#[test]
fn lorentzian_exact_threshold() {
    // the exact single-t_c threshold lies slightly below 23/25
    let s = shape(ShapeKind::Lorentzian);
    assert!(optimize_c(&s, 0.9).unwrap().eta < 1.0 - 1e-9);
    assert!((optimize_c(&s, 0.92).unwrap().eta - 1.0).abs() < 1e-8);
}

#[test]
fn synthesis_phase_trivial_for_real_shapes() {
    let s = shape(ShapeKind::Sech);
    let r = optimize_c(&s, 0.6).unwrap();
    let d = synthesize_omega_atom(&r.map, 0.0, 0.6).unwrap();
    assert!(d.theta().iter().all(|&(_, th)| th == 0.0));
    assert!(d.samples().iter().all(|(_, v)| v.im == 0.0));
}

#[test]
fn synthesis_dec_exp_is_single_impulse() {
    let s = shape(ShapeKind::DecreasingExp);
    let r = optimize_c(&s, 0.25).unwrap();
    let d = synthesize_omega_atom(&r.map, 0.0, 0.25).unwrap();
    assert!(d.samples().is_empty());
    let imp = d.impulses();
    assert_eq!(imp.len(), 1);
    assert_relative_eq!(imp[0].area, std::f64::consts::FRAC_PI_2, max_relative = 1e-12);
    assert_eq!(imp[0].t, 0.0);
}

#[test]
fn synthesis_rejects_rate_mismatch() {
    let s = shape(ShapeKind::Sech);
    let r = optimize_c(&s, 0.6).unwrap();
    assert!(synthesize_omega_atom(&r.map, 0.0, 0.7).is_err());
}

#[test]
fn synthesis_excludes_critical_neighbourhood() {
    let s = shape(ShapeKind::Sech);
    let r = optimize_c(&s, 0.6).unwrap();
    let tc = r.map.critical_times[0];
    let d = synthesize_omega_atom(&r.map, 0.3, 0.6).unwrap();
    let eps = 1e-6 / 0.6;
    assert!(d.samples().iter().all(|(t, _)| *t <= tc - eps * 0.999));
    assert_eq!(d.omega(tc + 0.1), Complex64::new(0.0, 0.0));
}

#[test]
fn adiabatic_matches_synthesis_at_long_pulses() {
    let gamma = 400.0;
    let s = shape(ShapeKind::Sech);
    let r = optimize_c(&s, gamma).unwrap();
    let exact = synthesize_omega_atom(&r.map, 0.0, gamma).unwrap();
    let adi = adiabatic_omega(&s, gamma, 0.0).unwrap();
    for k in 0..=40 {
        let t = -4.0 + 0.2 * k as f64;
        let a = adi.omega(t);
        let e = exact.omega(t);
        assert!((a - e).norm() / e.norm() < 0.01, "t={t}");
    }
}

#[test]
fn adiabatic_ratio_at_moderate_rates() {
    // exact/adiabatic = (1 + φ̇/(Γφ))/√(1 − φ²/(2Γ rem))
    let gamma = 10.0;
    let s = shape(ShapeKind::Sech);
    let r = optimize_c(&s, gamma).unwrap();
    let exact = synthesize_omega_atom(&r.map, 0.0, gamma).unwrap();
    let adi = adiabatic_omega(&s, gamma, 0.0).unwrap();
    for k in 0..=30 {
        let t = -3.0 + 0.2 * k as f64;
        let p = s.eval(t).re;
        let ratio = (1.0 + s.deriv(t).re / (gamma * p)) / (1.0 - p * p / (2.0 * gamma * s.remaining(t))).sqrt();
        assert_relative_eq!(exact.omega(t).re / adi.omega(t).re, ratio, max_relative = 1e-6);
    }
}

#[test]
fn adiabatic_phase_closed_form() {
    let (gamma, delta) = (5.0, 2.0);
    let s = shape(ShapeKind::Gaussian);
    let d = adiabatic_omega(&s, gamma, delta).unwrap();
    assert!(d.theta().iter().all(|&(t, th)| (th - delta * s.remaining(t).ln() / (2.0 * gamma)).abs() < 1e-8 + 1e-6 * th.abs()));
    let z = adiabatic_omega(&s, gamma, 0.0).unwrap();
    assert!(z.samples().iter().all(|(_, v)| v.im == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ansatz_beats_baseline(kind in prop::sample::select(vec![ShapeKind::Sech, ShapeKind::Gaussian, ShapeKind::Lorentzian, ShapeKind::IncreasingExp]), rate in 0.2f64..3.0) {
        let s = shape(kind);
        let r = optimize_c(&s, rate).unwrap();
        let (_, base) = c_leq_one_eta(&s, rate).unwrap();
        prop_assert!(r.eta >= base - 1e-12);
        prop_assert!(r.eta <= 1.0 + 1e-12);
        if !r.map.critical_times.is_empty() {
            for f in [0.99, 1.01] {
                prop_assert!(eta_at(&s, rate, r.c * f) <= r.eta + 1e-12);
            }
        }
    }

    #[test]
    fn critical_time_is_earliest_root(rate in 0.2f64..2.0, c in 1.0f64..2.0) {
        let s = shape(ShapeKind::Sech);
        if let Some(tc) = find_critical_time(&s, rate, c).unwrap() {
            prop_assert!(constraint(&s, rate, c, tc) <= 1e-9 * rate);
            let grid = s.scan_grid(2000);
            for t in grid.into_iter().filter(|&t| t < tc - 1e-9) {
                prop_assert!(constraint(&s, rate, c, t) > 0.0);
            }
        }
    }
}

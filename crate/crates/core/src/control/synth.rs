use std::f64::consts::PI;

use num_complex::Complex64;

use super::drive::{ControlDrive, DriveSegment, Impulse, ImpulseCoupling, PostTcMode};
use super::RetrievalMap;
use crate::error::{Error, Result};
use crate::model::MemoryParams;
use crate::numerics::quad::gauss_legendre5;
use crate::numerics::roots::bisect;
use crate::shapes::PulseShape;

/// Sampling settings for drive synthesis.
#[derive(Clone, Copy, Debug)]
pub struct SynthOptions {
    /// Points of the base grid on each driven interval.
    pub base_points: usize,
    /// Extra points clustered geometrically toward each critical time.
    pub cluster_points: usize,
    /// ε = eps_scale / rate is excluded around each critical time.
    pub eps_scale: f64,
    /// M in |Ω| = M·g√N for the cavity-limited post-t_c mode.
    pub decouple_magnitude: f64,
    /// Norm left outside the window when an infinite domain is cut.
    pub support_eps: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            base_points: 2001,
            cluster_points: 240,
            eps_scale: 1e-6,
            decouple_magnitude: 100.0,
            support_eps: 1e-12,
        }
    }
}

/// Finite window covering the shape, cut where at most `eps` norm remains.
pub fn simulation_window(shape: &PulseShape, eps: f64) -> (f64, f64) {
    shape.support(eps)
}

fn sample_grid(shape: &PulseShape, lo: f64, hi: f64, opts: &SynthOptions, cluster_lo: bool, cluster_hi: bool, eps: f64) -> Vec<f64> {
    let n = opts.base_points.max(8);
    let tau = shape.tau();
    let mut g: Vec<f64> = if hi - lo <= 20.0 * tau {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    } else {
        // sinh grid about the peak of |φ|
        let scan = shape.scan_grid(1024);
        let m = scan
            .iter()
            .copied()
            .filter(|t| *t >= lo && *t <= hi)
            .max_by(|a, b| shape.eval(*a).norm().total_cmp(&shape.eval(*b).norm()))
            .unwrap_or(0.5 * (lo + hi));
        let s0 = ((lo - m) / tau).asinh();
        let s1 = ((hi - m) / tau).asinh();
        let mut v: Vec<f64> = (0..n)
            .map(|i| m + tau * (s0 + (s1 - s0) * i as f64 / (n - 1) as f64).sinh())
            .collect();
        v[0] = lo;
        v[n - 1] = hi;
        v
    };
    let span = hi - lo;
    let k = opts.cluster_points;
    if k > 1 {
        let dmax = 0.1 * span;
        let dmin = eps.min(dmax * 1e-3);
        let ratio = (dmin / dmax).ln();
        for j in 0..k {
            let d = dmax * (ratio * j as f64 / (k - 1) as f64).exp();
            if cluster_hi {
                g.push(hi - d);
            }
            if cluster_lo {
                g.push(lo + d);
            }
        }
    }
    g.retain(|t| *t >= lo && *t <= hi);
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * span.max(1e-300));
    g
}

/// Driven intervals [lo, hi] and whether each end sits next to a critical time.
fn driven_intervals(map: &RetrievalMap, window: (f64, f64), eps: f64) -> Vec<(f64, f64, bool, bool)> {
    let (a, b) = window;
    let tcs = &map.critical_times;
    let mut out = Vec::new();
    let push = |out: &mut Vec<_>, lo: f64, hi: f64, cl: bool, ch: bool| {
        if hi - lo > 4.0 * eps {
            out.push((lo, hi, cl, ch));
        }
    };
    match tcs.len() {
        0 => push(&mut out, a, b, false, false),
        1 => {
            if tcs[0] > map.t1() {
                push(&mut out, a, tcs[0].min(b) - eps, false, true);
            }
        }
        _ => {
            if tcs[0] > map.t1() {
                push(&mut out, a, tcs[0].min(b) - eps, false, true);
            }
            if tcs[1] + eps < b {
                push(&mut out, tcs[1] + eps, b, true, false);
            }
        }
    }
    out
}

/// Integrates θ̇ along the grid with 5-point Gauss–Legendre per interval.
fn integrate_theta<F: Fn(f64) -> f64>(grid: &[f64], rate: F) -> Vec<f64> {
    let mut th = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    th.push(0.0);
    for w in grid.windows(2) {
        acc += gauss_legendre5(&rate, w[0], w[1]);
        th.push(acc);
    }
    th
}

fn check_rate_match(map: &RetrievalMap, rate: f64) -> Result<()> {
    if (map.rate - rate).abs() > 1e-12 * rate.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "map built for rate {} used with rate {rate}",
            map.rate
        )));
    }
    Ok(())
}

fn den_checked(map: &RetrievalMap, t: f64) -> Result<f64> {
    let d = map.denominator(t);
    if !(d > 0.0) {
        return Err(Error::ConstraintViolated { t, denominator: d });
    }
    Ok(d)
}

/// Ω(t) for the atom-limited regime: −[ψ̇ + (Γ+iΔ)ψ]e^{−iθ}/√D before the
/// critical time, zero after, with an onset impulse for abrupt starts.
pub fn synthesize_omega_atom(map: &RetrievalMap, delta: f64, gamma: f64) -> Result<ControlDrive> {
    synthesize_omega_atom_with(map, delta, gamma, &SynthOptions::default())
}

pub fn synthesize_omega_atom_with(map: &RetrievalMap, delta: f64, gamma: f64, opts: &SynthOptions) -> Result<ControlDrive> {
    check_rate_match(map, gamma)?;
    let window = simulation_window(&map.shape, opts.support_eps);
    let eps = opts.eps_scale / gamma;
    let z = Complex64::new(gamma, delta);
    let theta_rate = |t: f64| {
        let p = map.eval(t);
        let dp = map.deriv(t);
        (-(p * dp.conj()).im + delta * p.norm_sqr()) / map.denominator(t)
    };
    let mut segments = Vec::new();
    let mut theta = Vec::new();
    for (lo, hi, cl, ch) in driven_intervals(map, window, eps) {
        let grid = sample_grid(&map.shape, lo, hi, opts, cl, ch, eps);
        let th = integrate_theta(&grid, theta_rate);
        let mut vals = Vec::with_capacity(grid.len());
        for (&t, &thv) in grid.iter().zip(&th) {
            let den = den_checked(map, t)?;
            let x = map.deriv(t) + z * map.eval(t);
            vals.push(-x * Complex64::from_polar(1.0, -thv) / den.sqrt());
        }
        theta.extend(grid.iter().copied().zip(th.iter().copied()));
        segments.push(DriveSegment::new(grid, vals)?);
    }
    let mut impulses = Vec::new();
    let p0 = map.onset_amplitude();
    if p0.norm() > 0.0 {
        let ratio = (p0.norm() / (2.0 * gamma).sqrt()).min(1.0);
        impulses.push(Impulse {
            t: map.t1(),
            area: ratio.asin(),
            phase: p0.arg() + PI,
            coupling: ImpulseCoupling::SpinPolarization,
        });
    }
    ControlDrive::new(window, segments, impulses, PostTcMode::Zero, vec![], theta)
}

/// Ω(t) for the cavity-limited regime with P adiabatically eliminated; after
/// each critical time the atoms are decoupled by a strong drive.
pub fn synthesize_omega_cavity(map: &RetrievalMap, params: &MemoryParams) -> Result<ControlDrive> {
    synthesize_omega_cavity_with(map, params, &SynthOptions::default())
}

pub fn synthesize_omega_cavity_with(map: &RetrievalMap, params: &MemoryParams, opts: &SynthOptions) -> Result<ControlDrive> {
    let d = params.derived()?;
    let kappa = d.kappa;
    check_rate_match(map, kappa)?;
    let g = params.g_sqrt_n;
    if !(g > 0.0) {
        return Err(Error::InvalidParameter("cavity-limited drive needs g√N > 0".into()));
    }
    let gd = Complex64::new(params.gamma, params.delta);
    let special = params.gamma == 0.0 && params.delta == 0.0;
    let window = simulation_window(&map.shape, opts.support_eps);
    let eps = opts.eps_scale / kappa;
    let xfun = |t: f64| gd * map.deriv(t) + (gd * kappa + g * g) * map.eval(t);
    let theta_rate = |t: f64| {
        let p = map.eval(t);
        let den = map.denominator(t);
        if special {
            (p * map.deriv(t).conj()).im / den
        } else {
            let x = xfun(t);
            ((x.conj() * p - x.norm_sqr() / (g * g)) / gd).im / den
        }
    };
    let mut segments = Vec::new();
    let mut theta = Vec::new();
    let intervals = driven_intervals(map, window, eps);
    for &(lo, hi, cl, ch) in &intervals {
        let grid = sample_grid(&map.shape, lo, hi, opts, cl, ch, eps);
        let th = integrate_theta(&grid, theta_rate);
        let mut vals = Vec::with_capacity(grid.len());
        for (&t, &thv) in grid.iter().zip(&th) {
            let den = den_checked(map, t)?;
            vals.push(-xfun(t) * Complex64::from_polar(1.0, -thv) / (g * den.sqrt()));
        }
        theta.extend(grid.iter().copied().zip(th.iter().copied()));
        segments.push(DriveSegment::new(grid, vals)?);
    }
    // decoupled wherever the map is past a critical time and not driven
    let mut switch = Vec::new();
    if !map.critical_times.is_empty() {
        let mut cursor = window.0;
        for (lo, hi) in segments.iter().map(DriveSegment::span) {
            if lo > cursor {
                switch.push((cursor, lo));
            }
            cursor = hi;
        }
        if cursor < window.1 {
            switch.push((cursor, window.1));
        }
        // the stretch before the first driven interval is only decoupled if
        // the map starts at a critical time
        if map.critical_times[0] > map.t1() {
            switch.retain(|&(a, _)| a > window.0);
        }
    }
    let mut impulses = Vec::new();
    let p0 = map.onset_amplitude();
    if p0.norm() > 0.0 {
        let ratio = (p0.norm() / (2.0 * kappa).sqrt()).min(1.0);
        impulses.push(Impulse {
            t: map.t1(),
            area: ratio.asin(),
            phase: p0.arg() - 0.5 * PI,
            coupling: ImpulseCoupling::SpinCavity,
        });
    }
    ControlDrive::new(
        window,
        segments,
        impulses,
        PostTcMode::Decouple {
            magnitude: opts.decouple_magnitude,
        },
        switch,
        theta,
    )
}

/// Adiabatic-regime drive −[(Γ+iΔ)/√(2Γ)]·φ/√(∫_t^{t2}|φ|²) with the phase
/// e^{−iΔ/(Γ²+Δ²)·∫|Ω|²} accumulated forward along the grid.
pub fn adiabatic_omega(shape: &PulseShape, gamma: f64, delta: f64) -> Result<ControlDrive> {
    adiabatic_omega_with(shape, gamma, delta, &SynthOptions::default())
}

pub fn adiabatic_omega_with(shape: &PulseShape, gamma: f64, delta: f64, opts: &SynthOptions) -> Result<ControlDrive> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter("rate must be positive".into()));
    }
    let (a, mut b) = simulation_window(shape, opts.support_eps);
    // keep clear of the vanishing remaining norm at a finite end
    const REM_FLOOR: f64 = 1e-10;
    if shape.remaining(b) < REM_FLOOR {
        b = bisect(|t| shape.remaining(t) - REM_FLOOR, a, b, 1e-13 * shape.tau())?;
    }
    let pre = Complex64::new(gamma, delta) / (2.0 * gamma).sqrt();
    let mag2 = |t: f64| pre.norm_sqr() * shape.eval(t).norm_sqr() / shape.remaining(t);
    let grid = sample_grid(shape, a, b, opts, false, false, 0.0);
    let k = delta / (gamma * gamma + delta * delta);
    let phase = integrate_theta(&grid, |t| -k * mag2(t));
    let vals: Vec<Complex64> = grid
        .iter()
        .zip(&phase)
        .map(|(&t, &ph)| -pre * shape.eval(t) / shape.remaining(t).sqrt() * Complex64::from_polar(1.0, ph))
        .collect();
    let theta = grid.iter().copied().zip(phase.iter().copied()).collect();
    let seg = DriveSegment::new(grid, vals)?;
    ControlDrive::new((a, shape.support(opts.support_eps).1), vec![seg], vec![], PostTcMode::Zero, vec![], theta)
}

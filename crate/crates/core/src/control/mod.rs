//! Retrieval-mode optimization: critical-time search, the fixed-point scale
//! constant, the piecewise target mode ψ(t), efficiencies of the competing
//! strategies, and synthesis of the drive Ω(t).

mod drive;
mod synth;

pub use drive::{ControlDrive, DriveSegment, Impulse, ImpulseCoupling, PostTcMode};
pub use synth::{
    adiabatic_omega, adiabatic_omega_with, simulation_window, synthesize_omega_atom, synthesize_omega_atom_with,
    synthesize_omega_cavity, synthesize_omega_cavity_with, SynthOptions,
};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::roots::{bisect, golden_min};
use crate::shapes::PulseShape;

/// Number of points in the critical-time sign scan.
pub const SCAN_POINTS: usize = 4096;
const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SegmentKind {
    ScaledShape,
    ExpDecay,
}

/// One piece of ψ: `scale·φ(t)` or `scale·e^{−R(t − t_start)}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MapSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub kind: SegmentKind,
    #[serde(skip)]
    pub scale: Complex64,
    /// 1 − ∫_{t1}^{t_start} |ψ|²
    rem_start: f64,
    /// rem_start − |scale|²·∫_{t_start}^{t2}|φ|², for scaled segments
    excess: f64,
}

/// Piecewise target mode ψ(t) for retrieval.
#[derive(Clone, Debug)]
pub struct RetrievalMap {
    pub segments: Vec<MapSegment>,
    pub critical_times: Vec<f64>,
    pub c: f64,
    pub rate: f64,
    pub shape: PulseShape,
}

impl RetrievalMap {
    fn build(
        shape: &PulseShape,
        rate: f64,
        c: f64,
        critical_times: Vec<f64>,
        pieces: &[(f64, f64, SegmentKind, Complex64)],
    ) -> Self {
        let mut segments = Vec::with_capacity(pieces.len());
        let mut rem = 1.0;
        for &(ts, te, kind, scale) in pieces {
            let s2 = scale.norm_sqr();
            let excess = match kind {
                SegmentKind::ScaledShape => rem - s2 * shape.remaining(ts),
                SegmentKind::ExpDecay => 0.0,
            };
            let seg = MapSegment {
                t_start: ts,
                t_end: te,
                kind,
                scale,
                rem_start: rem,
                excess,
            };
            rem = seg_remaining(&seg, shape, rate, te);
            segments.push(seg);
        }
        Self {
            segments,
            critical_times,
            c,
            rate,
            shape: shape.clone(),
        }
    }

    pub fn t1(&self) -> f64 {
        self.shape.t1()
    }

    pub fn t2(&self) -> f64 {
        self.shape.t2()
    }

    fn segment_index(&self, t: f64) -> Option<usize> {
        if t < self.t1() || t > self.t2() {
            return None;
        }
        let i = self.segments.partition_point(|s| s.t_end < t);
        Some(i.min(self.segments.len() - 1))
    }

    /// ψ(t).
    pub fn eval(&self, t: f64) -> Complex64 {
        match self.segment_index(t) {
            None => Complex64::new(0.0, 0.0),
            Some(i) => seg_value(&self.segments[i], &self.shape, self.rate, t),
        }
    }

    /// dψ/dt.
    pub fn deriv(&self, t: f64) -> Complex64 {
        match self.segment_index(t) {
            None => Complex64::new(0.0, 0.0),
            Some(i) => {
                let s = &self.segments[i];
                match s.kind {
                    SegmentKind::ScaledShape => s.scale * self.shape.deriv(t),
                    SegmentKind::ExpDecay => -self.rate * seg_value(s, &self.shape, self.rate, t),
                }
            }
        }
    }

    /// 1 − ∫_{t1}^t |ψ|².
    pub fn remaining_norm(&self, t: f64) -> f64 {
        match self.segment_index(t) {
            None if t < self.t1() => 1.0,
            None => {
                let s = self.segments.last().expect("map has segments");
                seg_remaining(s, &self.shape, self.rate, self.t2())
            }
            Some(i) => seg_remaining(&self.segments[i], &self.shape, self.rate, t),
        }
    }

    /// 2R(1 − ∫_{t1}^t|ψ|²) − |ψ(t)|², nonnegative for a feasible map.
    pub fn denominator(&self, t: f64) -> f64 {
        2.0 * self.rate * self.remaining_norm(t) - self.eval(t).norm_sqr()
    }

    /// ∫ |ψ|² over the whole window.
    pub fn total_norm(&self) -> f64 {
        1.0 - self.remaining_norm(self.t2())
    }

    /// True when ψ jumps from zero at a finite start time.
    pub fn onset_amplitude(&self) -> Complex64 {
        if self.t1().is_finite() {
            self.eval(self.t1())
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

fn seg_value(s: &MapSegment, shape: &PulseShape, rate: f64, t: f64) -> Complex64 {
    match s.kind {
        SegmentKind::ScaledShape => s.scale * shape.eval(t),
        SegmentKind::ExpDecay => s.scale * (-rate * (t - s.t_start)).exp(),
    }
}

fn seg_remaining(s: &MapSegment, shape: &PulseShape, rate: f64, t: f64) -> f64 {
    let t = t.clamp(s.t_start, s.t_end);
    match s.kind {
        SegmentKind::ScaledShape => s.excess + s.scale.norm_sqr() * shape.remaining(t),
        SegmentKind::ExpDecay => {
            s.rem_start + s.scale.norm_sqr() * (-2.0 * rate * (t - s.t_start)).exp_m1() / (2.0 * rate)
        }
    }
}

/// η = |∫ φ* ψ dt|², segment by segment.
pub fn overlap_eta(map: &RetrievalMap) -> Result<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for s in &map.segments {
        acc += match s.kind {
            SegmentKind::ScaledShape => s.scale * map.shape.norm_between(s.t_start, s.t_end),
            SegmentKind::ExpDecay => s.scale * map.shape.exp_overlap(s.t_start, s.t_end, map.rate)?,
        };
    }
    Ok(acc.norm_sqr())
}

fn check_rate(rate: f64, c: f64) -> Result<()> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("scale constant must be positive, got {c}")));
    }
    Ok(())
}

/// D(t) = 2R(1 − c²F(t)) − c²|φ(t)|².
pub fn constraint(shape: &PulseShape, rate: f64, c: f64, t: f64) -> f64 {
    let c2 = c * c;
    2.0 * rate * ((1.0 - c2) + c2 * shape.remaining(t)) - c2 * shape.eval(t).norm_sqr()
}

/// Earliest time at which D reaches zero; `Some(t1)` when the constraint is
/// already violated at a finite start time, `None` if never violated.
pub fn find_critical_time(shape: &PulseShape, rate: f64, c: f64) -> Result<Option<f64>> {
    check_rate(rate, c)?;
    let d = |t: f64| constraint(shape, rate, c, t);
    let t1 = shape.t1();
    if t1.is_finite() && d(t1) <= 0.0 {
        return Ok(Some(t1));
    }
    let grid = shape.scan_grid(SCAN_POINTS);
    let tol = 1e-12 * shape.tau();
    let exact_unit = c == 1.0;
    let mut prev = grid[0];
    for &t in grid.iter().skip(1) {
        // both terms underflowed: nothing left to retrieve
        if exact_unit && shape.remaining(t) < 1e-250 && shape.eval(t).norm_sqr() < 1e-250 {
            break;
        }
        let v = d(t);
        if !v.is_finite() {
            return Err(Error::RootBracketing {
                a: prev,
                b: t,
                detail: format!("non-finite constraint value at {t}"),
            });
        }
        if v <= 0.0 {
            return bisect(d, prev, t, tol).map(Some);
        }
        prev = t;
    }
    Ok(None)
}

/// Single-critical-time map for a given scale constant.
pub fn single_tc_map(shape: &PulseShape, rate: f64, c: f64) -> Result<RetrievalMap> {
    let (t1, t2) = shape.domain();
    match find_critical_time(shape, rate, c)? {
        None => Ok(RetrievalMap::build(
            shape,
            rate,
            c,
            vec![],
            &[(t1, t2, SegmentKind::ScaledShape, Complex64::new(c, 0.0))],
        )),
        Some(tc) if tc == t1 => {
            let p = shape.eval(t1);
            let amp = (2.0 * rate).sqrt();
            let c_eff = amp / p.norm();
            let scale = p / p.norm() * amp;
            Ok(RetrievalMap::build(
                shape,
                rate,
                c_eff,
                vec![t1],
                &[(t1, t2, SegmentKind::ExpDecay, scale)],
            ))
        }
        Some(tc) => Ok(RetrievalMap::build(
            shape,
            rate,
            c,
            vec![tc],
            &[
                (t1, tc, SegmentKind::ScaledShape, Complex64::new(c, 0.0)),
                (tc, t2, SegmentKind::ExpDecay, shape.eval(tc) * c),
            ],
        )),
    }
}

/// Converged ansatz.
#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub c: f64,
    pub map: RetrievalMap,
    pub eta: f64,
    pub iterations: usize,
}

fn fixed_point<F>(mut eval: F) -> Result<(f64, RetrievalMap, f64, usize)>
where
    F: FnMut(f64) -> Result<(RetrievalMap, f64)>,
{
    let mut c = 1.0;
    let mut lambda = 1.0;
    let mut prev_step: Option<f64> = None;
    let mut prev_c = c;
    for it in 1..=FIXED_POINT_MAX_ITER {
        let (map, eta) = eval(c)?;
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::NonFinite(format!("efficiency {eta} at c = {c}")));
        }
        let step = 1.0 / eta.sqrt() - c;
        if step.abs() < FIXED_POINT_TOL {
            return Ok((c, map, eta, it));
        }
        if let Some(p) = prev_step {
            if p * step < 0.0 && step.abs() > 0.5 * p.abs() {
                lambda *= 0.5;
            }
        }
        prev_c = c;
        c += lambda * step;
        prev_step = Some(step);
    }
    Err(Error::FixedPoint {
        iterations: FIXED_POINT_MAX_ITER,
        previous: prev_c,
        last: c,
    })
}

/// Fixed point c = 1/√η(c) of the single-critical-time ansatz.
pub fn optimize_c(shape: &PulseShape, rate: f64) -> Result<OptimizeResult> {
    check_rate(rate, 1.0)?;
    let first = single_tc_map(shape, rate, 1.0)?;
    if first.critical_times.is_empty() {
        let eta = overlap_eta(&first)?;
        return Ok(OptimizeResult {
            c: 1.0,
            map: first,
            eta,
            iterations: 0,
        });
    }
    let (c, map, eta, iterations) = fixed_point(|c| {
        let m = single_tc_map(shape, rate, c)?;
        let e = overlap_eta(&m)?;
        Ok((m, e))
    })?;
    let c = if map.critical_times.first() == Some(&shape.t1()) { map.c } else { c };
    Ok(OptimizeResult { c, map, eta, iterations })
}

/// Outcome of the two-critical-time strategy.
#[derive(Clone, Debug)]
pub struct TwoTcResult {
    pub map: RetrievalMap,
    pub eta: f64,
    pub c: f64,
    /// Set when no second critical time exists and the single-t_c map is returned.
    pub fell_back: bool,
}

/// G(t) = 2R(1 − F(t)) − |φ(t)|², the unit-scale constraint.
fn unit_constraint(shape: &PulseShape, rate: f64, t: f64) -> f64 {
    2.0 * rate * shape.remaining(t) - shape.eval(t).norm_sqr()
}

/// Second critical time: the last upward zero crossing of G after `after`.
fn second_critical_time(shape: &PulseShape, rate: f64, after: f64) -> Result<Option<f64>> {
    let grid: Vec<f64> = shape.scan_grid(SCAN_POINTS).into_iter().filter(|&t| t > after).collect();
    if grid.len() < 2 {
        return Ok(None);
    }
    let g = |t: f64| unit_constraint(shape, rate, t);
    let last_neg = grid.iter().rposition(|&t| g(t) < 0.0);
    match last_neg {
        None => Ok(None),
        Some(i) if i + 1 >= grid.len() || g(grid[i + 1]) <= 0.0 => Ok(None),
        Some(i) => bisect(g, grid[i], grid[i + 1], 1e-12 * shape.tau()).map(Some),
    }
}

/// Three-segment ansatz with two critical times.
pub fn two_tc_map(shape: &PulseShape, rate: f64) -> Result<TwoTcResult> {
    let single = optimize_c(shape, rate)?;
    let fallback = |s: OptimizeResult| TwoTcResult {
        eta: s.eta,
        c: s.c,
        map: s.map,
        fell_back: true,
    };
    let Some(&tc1_single) = single.map.critical_times.first() else {
        return Ok(fallback(single));
    };
    if tc1_single == shape.t1() {
        return Ok(fallback(single));
    }
    let (t1, t2) = shape.domain();
    let Some(tc2) = second_critical_time(shape, rate, t1)? else {
        return Ok(fallback(single));
    };
    let build = |c: f64| -> Result<Option<RetrievalMap>> {
        let Some(tc1) = find_critical_time(shape, rate, c)? else {
            return Ok(None);
        };
        if tc1 == t1 || tc1 >= tc2 {
            return Ok(None);
        }
        let a = shape.eval(tc1) * c;
        let at_tc2 = a * (-rate * (tc2 - tc1)).exp();
        let p2 = shape.eval(tc2);
        if p2.norm() == 0.0 {
            return Ok(None);
        }
        let s3 = at_tc2 / p2;
        if !s3.is_finite() {
            return Ok(None);
        }
        Ok(Some(RetrievalMap::build(
            shape,
            rate,
            c,
            vec![tc1, tc2],
            &[
                (t1, tc1, SegmentKind::ScaledShape, Complex64::new(c, 0.0)),
                (tc1, tc2, SegmentKind::ExpDecay, a),
                (tc2, t2, SegmentKind::ScaledShape, s3),
            ],
        )))
    };
    let mut missing = false;
    let res = fixed_point(|c| match build(c)? {
        Some(m) => {
            let e = overlap_eta(&m)?;
            Ok((m, e))
        }
        None => {
            missing = true;
            Err(Error::RootBracketing {
                a: t1,
                b: t2,
                detail: "second critical time precedes the first".into(),
            })
        }
    });
    match res {
        Ok((c, map, eta, _)) => Ok(TwoTcResult {
            map,
            eta,
            c,
            fell_back: false,
        }),
        Err(_) if missing => Ok(fallback(single)),
        Err(e) => Err(e),
    }
}

/// Largest c ≤ 1 for which ψ = cφ is feasible everywhere; returns (c, c²).
pub fn c_leq_one_eta(shape: &PulseShape, rate: f64) -> Result<(f64, f64)> {
    check_rate(rate, 1.0)?;
    let h = |t: f64| {
        let p2 = shape.eval(t).norm_sqr();
        let f = 1.0 - shape.remaining(t);
        2.0 * rate / (p2 + 2.0 * rate * f)
    };
    let grid = shape.scan_grid(SCAN_POINTS);
    let (k, mut best) = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| (i, h(t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is nonempty");
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    if hi > lo {
        let (_, v) = golden_min(h, lo, hi, 1e-13 * shape.tau());
        best = best.min(v);
    }
    let c2 = best.min(1.0);
    Ok((c2.sqrt(), c2))
}

#[cfg(test)]
mod tests;

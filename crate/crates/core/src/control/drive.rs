use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::spline::CubicSpline;

/// Which pair of amplitudes an impulse rotates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImpulseCoupling {
    /// S ↔ P, the delta limit of the control drive.
    SpinPolarization,
    /// S ↔ E, used by cavity-limited drives where P is eliminated.
    SpinCavity,
}

/// Instantaneous rotation representing a delta-function component of Ω:
/// S' = cos A·S + i e^{−iν} sin A·X, X' = i e^{iν} sin A·S + cos A·X.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub t: f64,
    pub area: f64,
    pub phase: f64,
    pub coupling: ImpulseCoupling,
}

impl Impulse {
    /// Applies the rotation to (S, X).
    pub fn rotate(&self, s: Complex64, x: Complex64) -> (Complex64, Complex64) {
        let (sn, cs) = self.area.sin_cos();
        let e = Complex64::from_polar(1.0, self.phase);
        let i = Complex64::i();
        (cs * s + i * e.conj() * sn * x, i * e * sn * s + cs * x)
    }
}

/// What the drive does once the spin wave has been emptied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum PostTcMode {
    /// Ω = 0 (atom-limited).
    Zero,
    /// Ω ≫ g√N decouples the atoms from the cavity (cavity-limited);
    /// `magnitude` is the ratio M in |Ω| = M·g√N.
    Decouple { magnitude: f64 },
}

/// A contiguous run of drive samples with its interpolant.
#[derive(Clone, Debug)]
pub struct DriveSegment {
    spline: Arc<CubicSpline<Complex64>>,
}

impl DriveSegment {
    pub fn new(t: Vec<f64>, omega: Vec<Complex64>) -> Result<Self> {
        Ok(Self {
            spline: Arc::new(CubicSpline::new(t, omega)?),
        })
    }

    pub fn times(&self) -> &[f64] {
        self.spline.knots()
    }

    pub fn values(&self) -> &[Complex64] {
        self.spline.values()
    }

    pub fn span(&self) -> (f64, f64) {
        let k = self.spline.knots();
        (k[0], k[k.len() - 1])
    }

    fn mirrored(&self, sum: f64) -> Result<Self> {
        let t: Vec<f64> = self.times().iter().rev().map(|&t| sum - t).collect();
        let v: Vec<Complex64> = self.values().iter().rev().map(|v| v.conj()).collect();
        Self::new(t, v)
    }
}

/// Sampled control field Ω(t) with impulse events.
///
/// Reversal about the drive's own window only flips a flag, so reversing
/// twice gives back the identical drive.
#[derive(Clone, Debug)]
pub struct ControlDrive {
    window: (f64, f64),
    segments: Vec<DriveSegment>,
    impulses: Vec<Impulse>,
    post_tc_mode: PostTcMode,
    switch_regions: Vec<(f64, f64)>,
    theta: Vec<(f64, f64)>,
    reversed: bool,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    window: (f64, f64),
    impulses: Vec<Impulse>,
    post_tc_mode: PostTcMode,
    switch_regions: Vec<(f64, f64)>,
    segments: Vec<(f64, f64)>,
    theta: Vec<(f64, f64)>,
}

impl ControlDrive {
    pub fn new(
        window: (f64, f64),
        segments: Vec<DriveSegment>,
        impulses: Vec<Impulse>,
        post_tc_mode: PostTcMode,
        switch_regions: Vec<(f64, f64)>,
        theta: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let (t1, t2) = window;
        if !(t1.is_finite() && t2.is_finite() && t2 > t1) {
            return Err(Error::EmptyInterval { t1, t2 });
        }
        let mut segments = segments;
        segments.sort_by(|a, b| a.span().0.total_cmp(&b.span().0));
        for w in segments.windows(2) {
            if w[1].span().0 < w[0].span().1 {
                return Err(Error::InvalidParameter("drive segments overlap".into()));
            }
        }
        for imp in &impulses {
            if !(0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&imp.area) {
                return Err(Error::InvalidParameter(format!("impulse area {} outside [0, π/2]", imp.area)));
            }
        }
        let mut impulses = impulses;
        impulses.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self {
            window,
            segments,
            impulses,
            post_tc_mode,
            switch_regions,
            theta,
            reversed: false,
        })
    }

    /// Ω ≡ 0 on the window.
    pub fn zero(window: (f64, f64)) -> Result<Self> {
        Self::new(window, vec![], vec![], PostTcMode::Zero, vec![], vec![])
    }

    /// Ω ≡ `omega` on the window.
    pub fn constant(window: (f64, f64), omega: Complex64) -> Result<Self> {
        let seg = DriveSegment::new(vec![window.0, window.1], vec![omega, omega])?;
        Self::new(window, vec![seg], vec![], PostTcMode::Zero, vec![], vec![])
    }

    /// Single interpolated segment through the given samples.
    pub fn from_samples(t: Vec<f64>, omega: Vec<Complex64>) -> Result<Self> {
        let seg = DriveSegment::new(t, omega)?;
        let span = seg.span();
        Self::new(span, vec![seg], vec![], PostTcMode::Zero, vec![], vec![])
    }

    pub fn with_impulses(mut self, impulses: Vec<Impulse>) -> Result<Self> {
        let mut all = self.impulses().to_vec();
        all.extend(impulses);
        self.materialize();
        Self::new(self.window, self.segments, all, self.post_tc_mode, self.switch_regions, self.theta)
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    pub fn post_tc_mode(&self) -> PostTcMode {
        self.post_tc_mode
    }

    fn mirror_t(&self, t: f64) -> f64 {
        if self.reversed {
            self.window.0 + self.window.1 - t
        } else {
            t
        }
    }

    fn mirror_span(&self, (a, b): (f64, f64)) -> (f64, f64) {
        if self.reversed {
            (self.mirror_t(b), self.mirror_t(a))
        } else {
            (a, b)
        }
    }

    /// Ω(t); zero between segments and outside the window.
    pub fn omega(&self, t: f64) -> Complex64 {
        let u = self.mirror_t(t);
        let v = self.canonical_omega(u);
        if self.reversed {
            v.conj()
        } else {
            v
        }
    }

    /// dΩ/dt; zero between segments.
    pub fn omega_deriv(&self, t: f64) -> Complex64 {
        let u = self.mirror_t(t);
        match self.segment_at(u) {
            None => Complex64::new(0.0, 0.0),
            Some(s) => {
                let d = s.spline.deriv(u);
                if self.reversed {
                    -d.conj()
                } else {
                    d
                }
            }
        }
    }

    fn segment_at(&self, u: f64) -> Option<&DriveSegment> {
        let i = self.segments.partition_point(|s| s.span().1 < u);
        self.segments.get(i).filter(|s| {
            let (a, b) = s.span();
            u >= a && u <= b
        })
    }

    fn canonical_omega(&self, u: f64) -> Complex64 {
        match self.segment_at(u) {
            Some(s) => s.spline.eval(u),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Impulses in time order, in the drive's own frame.
    pub fn impulses(&self) -> Vec<Impulse> {
        let mut out: Vec<Impulse> = self
            .impulses
            .iter()
            .map(|i| {
                if self.reversed {
                    Impulse {
                        t: self.mirror_t(i.t),
                        phase: -i.phase,
                        ..*i
                    }
                } else {
                    *i
                }
            })
            .collect();
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
        out
    }

    /// Intervals in which the atoms are decoupled (cavity-limited post-t_c).
    pub fn switch_regions(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<_> = self.switch_regions.iter().map(|&r| self.mirror_span(r)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    pub fn in_switch_region(&self, t: f64) -> bool {
        let u = self.mirror_t(t);
        self.switch_regions.iter().any(|&(a, b)| u >= a && u <= b)
    }

    pub fn segment_spans(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<_> = self.segments.iter().map(|s| self.mirror_span(s.span())).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    /// All (t, Ω) samples in increasing time.
    pub fn samples(&self) -> Vec<(f64, Complex64)> {
        let mut out: Vec<(f64, Complex64)> = self
            .segments
            .iter()
            .flat_map(|s| s.times().iter().copied().zip(s.values().iter().copied()))
            .map(|(t, v)| {
                if self.reversed {
                    (self.mirror_t(t), v.conj())
                } else {
                    (t, v)
                }
            })
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// Sampled spin-wave phase θ(t).
    pub fn theta(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<_> = self
            .theta
            .iter()
            .map(|&(t, th)| if self.reversed { (self.mirror_t(t), -th) } else { (t, th) })
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    /// Times at which Ω or the dynamics change non-smoothly.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = vec![self.window.0, self.window.1];
        v.extend(self.impulses.iter().map(|i| self.mirror_t(i.t)));
        for s in &self.segments {
            let (a, b) = s.span();
            v.push(self.mirror_t(a));
            v.push(self.mirror_t(b));
        }
        for &(a, b) in &self.switch_regions {
            v.push(self.mirror_t(a));
            v.push(self.mirror_t(b));
        }
        v.retain(|t| t.is_finite());
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Ω'(t) = Ω*(t1 + t2 − t) with impulses mirrored and phases conjugated.
    pub fn time_reverse(&self, t1: f64, t2: f64) -> Result<Self> {
        if !(t1.is_finite() && t2.is_finite() && t2 > t1) {
            return Err(Error::EmptyInterval { t1, t2 });
        }
        if (t1, t2) == self.window {
            let mut out = self.clone();
            out.reversed = !self.reversed;
            return Ok(out);
        }
        let mut base = self.clone();
        base.materialize();
        let sum = t1 + t2;
        let m = |t: f64| sum - t;
        let segments = base
            .segments
            .iter()
            .map(|s| s.mirrored(sum))
            .collect::<Result<Vec<_>>>()?;
        let impulses = base
            .impulses
            .iter()
            .map(|i| Impulse {
                t: m(i.t),
                phase: -i.phase,
                ..*i
            })
            .collect();
        let switch = base.switch_regions.iter().map(|&(a, b)| (m(b), m(a))).collect();
        let theta = base.theta.iter().rev().map(|&(t, th)| (m(t), -th)).collect();
        Self::new((m(base.window.1), m(base.window.0)), segments, impulses, base.post_tc_mode, switch, theta)
    }

    /// Rewrites the canonical storage so that `reversed` is false.
    fn materialize(&mut self) {
        if !self.reversed {
            return;
        }
        let sum = self.window.0 + self.window.1;
        self.segments = self
            .segments
            .iter()
            .map(|s| s.mirrored(sum).expect("mirrored knots stay increasing"))
            .collect();
        self.segments.sort_by(|a, b| a.span().0.total_cmp(&b.span().0));
        self.impulses = self.impulses();
        self.switch_regions = self.switch_regions();
        self.theta = self.theta();
        self.reversed = false;
    }

    /// Ω multiplied by e^{iχ} everywhere (impulse phases shifted by χ).
    pub fn rotated(&self, chi: f64) -> Result<Self> {
        let mut base = self.clone();
        base.materialize();
        let f = Complex64::from_polar(1.0, chi);
        let segments = base
            .segments
            .iter()
            .map(|s| DriveSegment::new(s.times().to_vec(), s.values().iter().map(|v| v * f).collect()))
            .collect::<Result<Vec<_>>>()?;
        let impulses = base.impulses.iter().map(|i| Impulse { phase: i.phase + chi, ..*i }).collect();
        Self::new(base.window, segments, impulses, base.post_tc_mode, base.switch_regions, base.theta)
    }

    /// CSV with columns t, re_omega, im_omega.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re_omega,im_omega")?;
        for (t, v) in self.samples() {
            writeln!(w, "{t:.17e},{:.17e},{:.17e}", v.re, v.im)?;
        }
        Ok(())
    }

    /// JSON sidecar: window, impulses, post-t_c mode, switch regions,
    /// segment spans and θ samples.
    pub fn sidecar_json(&self) -> Result<String> {
        let s = Sidecar {
            window: self.window,
            impulses: self.impulses(),
            post_tc_mode: self.post_tc_mode,
            switch_regions: self.switch_regions(),
            segments: self.segment_spans(),
            theta: self.theta(),
        };
        serde_json::to_string_pretty(&s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Rebuilds a drive from its CSV samples and (optional) sidecar. Without a
    /// sidecar all samples form one segment.
    pub fn read<R: BufRead>(csv: R, sidecar: Option<&str>) -> Result<Self> {
        let mut t = Vec::new();
        let mut v = Vec::new();
        for (n, line) in csv.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            match parsed {
                Ok(x) if x.len() == 3 => {
                    t.push(x[0]);
                    v.push(Complex64::new(x[1], x[2]));
                }
                Ok(_) => return Err(Error::Parse(format!("line {}: expected 3 columns", n + 1))),
                Err(_) if t.is_empty() => continue,
                Err(_) => return Err(Error::Parse(format!("line {}: bad number", n + 1))),
            }
        }
        let Some(json) = sidecar else {
            return Self::from_samples(t, v);
        };
        let meta: Sidecar = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
        let mut segments = Vec::new();
        for &(a, b) in &meta.segments {
            let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= a && t[i] <= b).collect();
            let st: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
            let sv: Vec<Complex64> = idx.iter().map(|&i| v[i]).collect();
            segments.push(DriveSegment::new(st, sv)?);
        }
        Self::new(meta.window, segments, meta.impulses, meta.post_tc_mode, meta.switch_regions, meta.theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn sample_drive() -> ControlDrive {
        let t: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let v: Vec<Complex64> = t.iter().map(|&x| Complex64::new(x.sin(), 0.3 * x)).collect();
        let seg = DriveSegment::new(t, v).unwrap();
        ControlDrive::new(
            (0.0, 3.0),
            vec![seg],
            vec![Impulse {
                t: 0.0,
                area: FRAC_PI_2,
                phase: 0.4,
                coupling: ImpulseCoupling::SpinPolarization,
            }],
            PostTcMode::Zero,
            vec![],
            vec![(0.0, 0.0), (1.0, 0.2)],
        )
        .unwrap()
    }

    #[test]
    fn double_reversal_is_identity() {
        let d = sample_drive();
        let r = d.time_reverse(0.0, 3.0).unwrap().time_reverse(0.0, 3.0).unwrap();
        for k in 0..300 {
            let t = k as f64 * 0.01;
            assert_eq!(d.omega(t).re.to_bits(), r.omega(t).re.to_bits());
            assert_eq!(d.omega(t).im.to_bits(), r.omega(t).im.to_bits());
        }
        assert_eq!(d.samples(), r.samples());
        assert_eq!(d.impulses(), r.impulses());
    }

    #[test]
    fn constant_real_is_symmetric() {
        let d = ControlDrive::constant((0.0, 2.0), Complex64::new(1.5, 0.0)).unwrap();
        let r = d.time_reverse(0.0, 2.0).unwrap();
        for k in 0..=20 {
            let t = k as f64 * 0.1;
            assert!((d.omega(t) - r.omega(t)).norm() < 1e-15);
        }
    }

    #[test]
    fn onset_impulse_moves_to_end() {
        let d = sample_drive();
        let r = d.time_reverse(0.0, 3.0).unwrap();
        let imp = r.impulses();
        assert_eq!(imp[0].t, 3.0);
        assert_eq!(imp[0].phase, -0.4);
        // Ω'(t) = Ω*(3 − t)
        assert!((r.omega(2.5) - d.omega(0.5).conj()).norm() < 1e-15);
        assert_eq!(r.omega(0.5), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn reversal_on_other_window_materializes() {
        let d = sample_drive();
        let r = d.time_reverse(-1.0, 3.0).unwrap();
        assert!(!r.is_reversed());
        assert!((r.omega(1.5) - d.omega(0.5).conj()).norm() < 1e-12);
        assert_eq!(r.window(), (-1.0, 2.0));
    }

    #[test]
    fn rotation_is_unitary() {
        let imp = Impulse {
            t: 0.0,
            area: 0.7,
            phase: 1.1,
            coupling: ImpulseCoupling::SpinPolarization,
        };
        let (s, p) = imp.rotate(Complex64::new(0.6, 0.1), Complex64::new(-0.2, 0.5));
        let before = 0.6f64.powi(2) + 0.1f64.powi(2) + 0.2f64.powi(2) + 0.5f64.powi(2);
        assert!((s.norm_sqr() + p.norm_sqr() - before).abs() < 1e-15);
        let full = Impulse { area: FRAC_PI_2, ..imp };
        let (s, p) = full.rotate(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        assert!(s.norm() < 1e-15);
        assert!((p - Complex64::i() * Complex64::from_polar(1.0, 1.1)).norm() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let d = sample_drive().time_reverse(0.0, 3.0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let json = d.sidecar_json().unwrap();
        let back = ControlDrive::read(buf.as_slice(), Some(&json)).unwrap();
        for k in 0..30 {
            let t = k as f64 * 0.1;
            assert!((back.omega(t) - d.omega(t)).norm() < 1e-14);
        }
        assert_eq!(back.impulses(), d.impulses());
    }

    #[test]
    fn rejects_large_area() {
        let bad = Impulse {
            t: 0.0,
            area: 2.0,
            phase: 0.0,
            coupling: ImpulseCoupling::SpinPolarization,
        };
        assert!(ControlDrive::zero((0.0, 1.0)).unwrap().with_impulses(vec![bad]).is_err());
    }
}

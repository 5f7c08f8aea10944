//! Photon pulse shapes φ(t): analytic families, tabulated pulses, truncation
//! with renormalization, moments and endpoint Taylor analysis.
//!
//! Every shape is stored in a canonical orientation. A time-reversed shape
//! carries a mirror centre `m` and evaluates as φ*(2m − t).

use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad::{gauss_legendre5, integrate, integrate_with, QuadOptions};
use crate::numerics::spline::CubicSpline;

/// Pulse families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    #[serde(rename = "dec-exp", alias = "decreasing-exp")]
    DecreasingExp,
    #[serde(rename = "inc-exp", alias = "increasing-exp")]
    IncreasingExp,
    Sech,
    Lorentzian,
    Gaussian,
    Tabulated,
}

impl ShapeKind {
    pub const ANALYTIC: [ShapeKind; 5] = [
        ShapeKind::DecreasingExp,
        ShapeKind::IncreasingExp,
        ShapeKind::Sech,
        ShapeKind::Lorentzian,
        ShapeKind::Gaussian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::DecreasingExp => "dec-exp",
            ShapeKind::IncreasingExp => "inc-exp",
            ShapeKind::Sech => "sech",
            ShapeKind::Lorentzian => "lorentzian",
            ShapeKind::Gaussian => "gaussian",
            ShapeKind::Tabulated => "tabulated",
        }
    }

    /// Natural support of the untruncated analytic form.
    fn natural_domain(&self) -> (f64, f64) {
        match self {
            ShapeKind::DecreasingExp => (0.0, f64::INFINITY),
            ShapeKind::IncreasingExp => (f64::NEG_INFINITY, 0.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dec-exp" | "decreasing-exp" | "decexp" => Ok(ShapeKind::DecreasingExp),
            "inc-exp" | "increasing-exp" | "incexp" => Ok(ShapeKind::IncreasingExp),
            "sech" => Ok(ShapeKind::Sech),
            "lorentzian" | "lorentz" => Ok(ShapeKind::Lorentzian),
            "gaussian" | "gauss" => Ok(ShapeKind::Gaussian),
            "tabulated" | "table" => Ok(ShapeKind::Tabulated),
            other => Err(Error::Parse(format!("unknown shape kind '{other}'"))),
        }
    }
}

#[derive(Debug)]
struct Table {
    spline: CubicSpline<Complex64>,
    cum_sq: Vec<f64>,
}

impl Table {
    fn new(t: Vec<f64>, v: Vec<Complex64>) -> Result<Self> {
        let spline = CubicSpline::new(t, v)?;
        let x = spline.knots().to_vec();
        let mut cum_sq = vec![0.0; x.len()];
        for i in 1..x.len() {
            cum_sq[i] = cum_sq[i - 1] + gauss_legendre5(|u| spline.eval(u).norm_sqr(), x[i - 1], x[i]);
        }
        Ok(Self { spline, cum_sq })
    }

    fn domain(&self) -> (f64, f64) {
        let k = self.spline.knots();
        (k[0], k[k.len() - 1])
    }

    fn index(&self, u: f64) -> usize {
        let k = self.spline.knots();
        k.partition_point(|&x| x <= u).saturating_sub(1).min(k.len() - 2)
    }

    fn sq_to(&self, u: f64) -> f64 {
        let (a, b) = self.domain();
        let u = u.clamp(a, b);
        let i = self.index(u);
        let k = self.spline.knots();
        self.cum_sq[i] + gauss_legendre5(|s| self.spline.eval(s).norm_sqr(), k[i], u)
    }
}

/// A normalized photon mode function.
#[derive(Clone, Debug)]
pub struct PulseShape {
    kind: ShapeKind,
    tau: f64,
    w1: f64,
    w2: f64,
    norm: f64,
    shift: Complex64,
    mirror: Option<f64>,
    table: Option<Arc<Table>>,
}

fn erf(x: f64) -> f64 {
    libm::erf(x)
}

fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// ∫_u^∞ of the unit Lorentzian intensity (2/π)/(1+v²)², for u ≥ 0.
fn lorentz_upper_tail(v: f64) -> f64 {
    if v.is_infinite() {
        return 0.0;
    }
    if v == 0.0 {
        return 0.5;
    }
    if v > 50.0 {
        let w = 1.0 / (v * v);
        (2.0 / PI) * (w / v) * (1.0 / 3.0 - w * (2.0 / 5.0 - w * (3.0 / 7.0 - w * 4.0 / 9.0)))
    } else {
        ((1.0 / v).atan() - v / (1.0 + v * v)) / PI
    }
}

fn lorentz_cdf(v: f64) -> f64 {
    if v.is_infinite() {
        return if v > 0.0 { 1.0 } else { 0.0 };
    }
    0.5 + (v.atan() + v / (1.0 + v * v)) / PI
}

impl PulseShape {
    /// Untruncated analytic shape with characteristic time `tau`.
    pub fn new(kind: ShapeKind, tau: f64) -> Result<Self> {
        if kind == ShapeKind::Tabulated {
            return Err(Error::InvalidParameter(
                "tabulated shapes are built from samples".into(),
            ));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        let (w1, w2) = kind.natural_domain();
        Ok(Self {
            kind,
            tau,
            w1,
            w2,
            norm: 1.0,
            shift: Complex64::new(0.0, 0.0),
            mirror: None,
            table: None,
        })
    }

    /// Tabulated shape from complex samples, cubic-interpolated and normalized.
    /// `tau` defaults to the time variance of the samples.
    pub fn from_samples(t: Vec<f64>, values: Vec<Complex64>, tau: Option<f64>) -> Result<Self> {
        if t.len() < 3 {
            return Err(Error::InvalidParameter("need at least three samples".into()));
        }
        let table = Table::new(t, values)?;
        let (w1, w2) = table.domain();
        let total = table.sq_to(w2);
        if !(total > 1e-300) {
            return Err(Error::ZeroWeight { t1: w1, t2: w2 });
        }
        let mut shape = Self {
            kind: ShapeKind::Tabulated,
            tau: 1.0,
            w1,
            w2,
            norm: 1.0 / total.sqrt(),
            shift: Complex64::new(0.0, 0.0),
            mirror: None,
            table: Some(Arc::new(table)),
        };
        shape.tau = match tau {
            Some(v) if v > 0.0 => v,
            Some(v) => return Err(Error::InvalidParameter(format!("tau must be positive, got {v}"))),
            None => shape.time_variance()?,
        };
        Ok(shape)
    }

    /// Reads a tabulated shape from CSV with columns t, Re φ[, Im φ].
    pub fn from_csv_reader<R: Read>(mut reader: R, tau: Option<f64>) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut t = Vec::new();
        let mut v = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
            let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            let nums = match parsed {
                Ok(n) => n,
                Err(_) if t.is_empty() => continue,
                Err(_) => return Err(Error::Parse(format!("line {}: '{line}'", lineno + 1))),
            };
            match nums.len() {
                2 => v.push(Complex64::new(nums[1], 0.0)),
                3 => v.push(Complex64::new(nums[1], nums[2])),
                n => return Err(Error::Parse(format!("line {}: expected 2 or 3 columns, got {n}", lineno + 1))),
            }
            t.push(nums[0]);
        }
        Self::from_samples(t, v, tau)
    }

    pub fn from_csv(path: &Path, tau: Option<f64>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(f, tau)
    }

    pub fn kind(&self) -> ShapeKind {
        self.kind
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Amplitude offset subtracted from the base form (zero unless shifted).
    pub fn onset_shift(&self) -> f64 {
        self.shift.norm()
    }

    pub fn is_reversed(&self) -> bool {
        self.mirror.is_some()
    }

    pub fn t1(&self) -> f64 {
        match self.mirror {
            Some(m) => 2.0 * m - self.w2,
            None => self.w1,
        }
    }

    pub fn t2(&self) -> f64 {
        match self.mirror {
            Some(m) => 2.0 * m - self.w1,
            None => self.w2,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t1(), self.t2())
    }

    pub fn is_truncated(&self) -> bool {
        let nat = match &self.table {
            Some(t) => t.domain(),
            None => self.kind.natural_domain(),
        };
        nat != (self.w1, self.w2) || self.shift != Complex64::new(0.0, 0.0)
    }

    fn to_canonical(&self, t: f64) -> f64 {
        match self.mirror {
            Some(m) => 2.0 * m - t,
            None => t,
        }
    }

    fn base(&self, u: f64) -> Complex64 {
        let tau = self.tau;
        let re = match self.kind {
            ShapeKind::DecreasingExp => {
                if u < 0.0 {
                    0.0
                } else {
                    (-u / (2.0 * tau)).exp() / tau.sqrt()
                }
            }
            ShapeKind::IncreasingExp => {
                if u > 0.0 {
                    0.0
                } else {
                    (u / (2.0 * tau)).exp() / tau.sqrt()
                }
            }
            ShapeKind::Sech => 1.0 / ((2.0 * u / tau).cosh() * tau.sqrt()),
            ShapeKind::Lorentzian => (2.0 / (PI * tau)).sqrt() * tau * tau / (tau * tau + u * u),
            ShapeKind::Gaussian => {
                (-u * u / (2.0 * tau * tau)).exp() / (PI.powf(0.25) * tau.sqrt())
            }
            ShapeKind::Tabulated => {
                let tab = self.table.as_ref().expect("tabulated shape has a table");
                let (a, b) = tab.domain();
                return if u < a || u > b {
                    Complex64::new(0.0, 0.0)
                } else {
                    tab.spline.eval(u)
                };
            }
        };
        Complex64::new(re, 0.0)
    }

    fn base_deriv(&self, u: f64) -> Complex64 {
        let tau = self.tau;
        let re = match self.kind {
            ShapeKind::DecreasingExp => -self.base(u).re / (2.0 * tau),
            ShapeKind::IncreasingExp => self.base(u).re / (2.0 * tau),
            ShapeKind::Sech => -(2.0 / tau) * (2.0 * u / tau).tanh() * self.base(u).re,
            ShapeKind::Lorentzian => {
                let d = tau * tau + u * u;
                -(2.0 / (PI * tau)).sqrt() * 2.0 * u * tau * tau / (d * d)
            }
            ShapeKind::Gaussian => -u / (tau * tau) * self.base(u).re,
            ShapeKind::Tabulated => {
                let tab = self.table.as_ref().expect("tabulated shape has a table");
                let (a, b) = tab.domain();
                return if u < a || u > b {
                    Complex64::new(0.0, 0.0)
                } else {
                    tab.spline.deriv(u)
                };
            }
        };
        Complex64::new(re, 0.0)
    }

    /// ∫_a^b |base(u)|² du (canonical coordinates, a ≤ b), with tail-stable forms.
    fn base_n2(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let tau = self.tau;
        match self.kind {
            ShapeKind::DecreasingExp => {
                let a = a.max(0.0);
                if !(b > a) {
                    return 0.0;
                }
                (-a / tau).exp() * (-(-(b - a) / tau).exp_m1())
            }
            ShapeKind::IncreasingExp => {
                let b = b.min(0.0);
                if !(b > a) {
                    return 0.0;
                }
                (b / tau).exp() * (-((a - b) / tau).exp_m1())
            }
            ShapeKind::Sech => {
                let x = 2.0 * a / tau;
                let y = 2.0 * b / tau;
                let omt = |z: f64| 2.0 / (1.0 + (2.0 * z).exp());
                let opt = |z: f64| 2.0 / (1.0 + (-2.0 * z).exp());
                if x >= 0.0 {
                    0.5 * (omt(x) - omt(y))
                } else if y <= 0.0 {
                    0.5 * (opt(y) - opt(x))
                } else {
                    0.5 * (y.tanh() - x.tanh())
                }
            }
            ShapeKind::Lorentzian => {
                let x = a / tau;
                let y = b / tau;
                if x >= 0.0 {
                    lorentz_upper_tail(x) - lorentz_upper_tail(y)
                } else if y <= 0.0 {
                    lorentz_upper_tail(-y) - lorentz_upper_tail(-x)
                } else {
                    lorentz_cdf(y) - lorentz_cdf(x)
                }
            }
            ShapeKind::Gaussian => {
                let x = a / tau;
                let y = b / tau;
                if x >= 0.0 {
                    0.5 * (erfc(x) - erfc(y))
                } else if y <= 0.0 {
                    0.5 * (erfc(-y) - erfc(-x))
                } else {
                    0.5 * (erf(y) - erf(x))
                }
            }
            ShapeKind::Tabulated => {
                let tab = self.table.as_ref().expect("tabulated shape has a table");
                tab.sq_to(b) - tab.sq_to(a)
            }
        }
    }

    /// ∫_a^b |norm·(base − shift)|² over canonical coordinates.
    fn shaped_n2(&self, a: f64, b: f64) -> f64 {
        let a = a.max(self.w1);
        let b = b.min(self.w2);
        if !(b > a) {
            return 0.0;
        }
        let v = if self.shift == Complex64::new(0.0, 0.0) {
            self.base_n2(a, b)
        } else {
            // direct quadrature avoids cancellation between base and offset
            let opts = QuadOptions {
                abs_tol: 1e-16,
                rel_tol: 1e-13,
                max_intervals: 2000,
            };
            integrate_with(|u| (self.base(u) - self.shift).norm_sqr(), a, b, &opts)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        (self.norm * self.norm * v).max(0.0)
    }

    /// φ(t); exactly zero outside [t1, t2].
    pub fn eval(&self, t: f64) -> Complex64 {
        let (t1, t2) = self.domain();
        if !(t >= t1 && t <= t2) {
            return Complex64::new(0.0, 0.0);
        }
        let u = self.to_canonical(t);
        let v = (self.base(u) - self.shift) * self.norm;
        if self.mirror.is_some() {
            v.conj()
        } else {
            v
        }
    }

    /// dφ/dt inside the domain (zero outside).
    pub fn deriv(&self, t: f64) -> Complex64 {
        let (t1, t2) = self.domain();
        if !(t >= t1 && t <= t2) {
            return Complex64::new(0.0, 0.0);
        }
        let u = self.to_canonical(t);
        let v = self.base_deriv(u) * self.norm;
        if self.mirror.is_some() {
            -v.conj()
        } else {
            v
        }
    }

    /// ∫_a^b |φ|² dt in actual time.
    pub fn norm_between(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        match self.mirror {
            None => self.shaped_n2(a, b),
            Some(m) => self.shaped_n2(2.0 * m - b, 2.0 * m - a),
        }
    }

    /// F(t) = ∫_{t1}^t |φ|².
    pub fn cumulative(&self, t: f64) -> f64 {
        self.norm_between(self.t1(), t)
    }

    /// 1 − F(t) = ∫_t^{t2} |φ|², evaluated without cancellation.
    pub fn remaining(&self, t: f64) -> f64 {
        self.norm_between(t, self.t2())
    }

    /// ∫_{ts}^{te} φ*(t) e^{−rate (t − ts)} dt.
    pub fn exp_overlap(&self, ts: f64, te: f64, rate: f64) -> Result<Complex64> {
        let (t1, t2) = self.domain();
        let a = ts.max(t1);
        let b = te.min(t2);
        if !(b > a) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let pre = if a > ts { (-rate * (a - ts)).exp() } else { 1.0 };
        let plain = self.mirror.is_none() && self.shift == Complex64::new(0.0, 0.0);
        let tau = self.tau;
        if plain && self.kind == ShapeKind::DecreasingExp {
            let k = rate + 1.0 / (2.0 * tau);
            let len = b - a;
            let v = self.norm / tau.sqrt() * (-a / (2.0 * tau)).exp() * (-(-k * len).exp_m1()) / k;
            return Ok(Complex64::new(pre * v, 0.0));
        }
        if plain && self.kind == ShapeKind::IncreasingExp {
            let k = 1.0 / (2.0 * tau) - rate;
            let len = b - a;
            let growth = if k == 0.0 { len } else { (k * len).exp_m1() / k };
            let v = self.norm / tau.sqrt() * (a / (2.0 * tau)).exp() * growth;
            return Ok(Complex64::new(pre * v, 0.0));
        }
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 4000,
        };
        let r = integrate_with(|t| self.eval(t).conj() * (-rate * (t - a)).exp(), a, b, &opts)?;
        Ok(r.value * pre)
    }

    /// Restricts to [t1, t2] (intersected with the current domain) and renormalizes.
    pub fn truncate(&self, t1: f64, t2: f64) -> Result<Self> {
        self.truncate_impl(t1, t2, false)
    }

    /// As [`truncate`](Self::truncate), and additionally subtracts the base value
    /// at the new end point so that φ(t2) = 0 with a linear leading term.
    pub fn truncate_shifted(&self, t1: f64, t2: f64) -> Result<Self> {
        self.truncate_impl(t1, t2, true)
    }

    fn truncate_impl(&self, t1: f64, t2: f64, shifted: bool) -> Result<Self> {
        if t1.is_nan() || t2.is_nan() || !(t2 > t1) {
            return Err(Error::EmptyInterval { t1, t2 });
        }
        let (mut a, mut b) = match self.mirror {
            Some(m) => (2.0 * m - t2, 2.0 * m - t1),
            None => (t1, t2),
        };
        a = a.max(self.w1);
        b = b.min(self.w2);
        if !(b > a) {
            return Err(Error::ZeroWeight { t1, t2 });
        }
        let mut out = self.clone();
        out.w1 = a;
        out.w2 = b;
        if shifted {
            if self.mirror.is_some() {
                return Err(Error::InvalidParameter(
                    "shifted truncation of a time-reversed shape".into(),
                ));
            }
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidParameter("shift needs a finite window".into()));
            }
            out.shift = self.base(b);
        }
        out.norm = 1.0;
        let total = out.shaped_n2(a, b);
        if !(total > 1e-300) {
            return Err(Error::ZeroWeight { t1, t2 });
        }
        out.norm = 1.0 / total.sqrt();
        Ok(out)
    }

    /// Time-reversed, conjugated mode φ*(t1 + t2 − t) on the same window; for
    /// semi-infinite windows the mirror is about t = 0.
    pub fn time_reversed(&self) -> Self {
        let mut out = self.clone();
        out.mirror = match self.mirror {
            Some(_) => None,
            None => {
                if self.w1.is_finite() && self.w2.is_finite() {
                    Some(0.5 * (self.w1 + self.w2))
                } else {
                    Some(0.0)
                }
            }
        };
        out
    }

    /// φ*(t1 + t2 − t) for an explicit window, which may differ from the
    /// domain (e.g. the finite simulation window of an infinite shape).
    pub fn reversed_in(&self, t1: f64, t2: f64) -> Result<Self> {
        let m = 0.5 * (t1 + t2);
        if !m.is_finite() {
            return Err(Error::InvalidParameter("reversal window must be finite".into()));
        }
        let mut out = self.clone();
        out.mirror = match self.mirror {
            None => Some(m),
            Some(c) if c == m => None,
            Some(_) => {
                return Err(Error::InvalidParameter(
                    "shape is already reversed about a different centre".into(),
                ))
            }
        };
        Ok(out)
    }

    /// Centre used for mapping infinite windows.
    fn center(&self) -> f64 {
        let (t1, t2) = self.domain();
        match (t1.is_finite(), t2.is_finite()) {
            (true, true) => 0.5 * (t1 + t2),
            (true, false) => t1,
            (false, true) => t2,
            (false, false) => match self.mirror {
                Some(m) => 2.0 * m,
                None => 0.0,
            },
        }
    }

    /// Sample grid spanning the domain: uniform on finite windows, sinh-mapped
    /// (out to 10⁴ τ) on infinite ones.
    pub fn scan_grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(3);
        let (t1, t2) = self.domain();
        let tau = self.tau;
        let smax = 1e4f64.asinh();
        let lin = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
        match (t1.is_finite(), t2.is_finite()) {
            (true, true) => (0..n).map(|i| lin(t1, t2, i)).collect(),
            (true, false) => (0..n).map(|i| t1 + tau * lin(0.0, smax, i).sinh()).collect(),
            (false, true) => (0..n).rev().map(|i| t2 - tau * lin(0.0, smax, i).sinh()).collect(),
            (false, false) => {
                let c = self.center();
                (0..n).map(|i| c + tau * lin(-smax, smax, i).sinh()).collect()
            }
        }
    }

    /// Finite window [a, b] ⊂ [t1, t2] outside of which at most `eps` of the
    /// norm lies on either side.
    pub fn support(&self, eps: f64) -> (f64, f64) {
        let (t1, t2) = self.domain();
        let c = self.center();
        let tau = self.tau;
        let smax = 1e6f64.asinh();
        let a = if t1.is_finite() {
            t1
        } else {
            let mut lo = 0.0;
            let mut hi = smax;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if self.cumulative(c - tau * mid.sinh()) > eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            c - tau * hi.sinh()
        };
        let b = if t2.is_finite() {
            t2
        } else {
            let mut lo = 0.0;
            let mut hi = smax;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if self.remaining(c + tau * mid.sinh()) > eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            c + tau * hi.sinh()
        };
        (a, b)
    }

    /// T_c = sqrt(⟨t²⟩ − ⟨t⟩²) over |φ|².
    pub fn time_variance(&self) -> Result<f64> {
        let (t1, t2) = self.domain();
        let c = self.center();
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-13,
            max_intervals: 4000,
        };
        let pieces: Vec<(f64, f64)> = match (t1.is_finite(), t2.is_finite()) {
            (true, true) => vec![(t1, t2)],
            _ => vec![(t1, c), (c, t2)],
        };
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut m0 = 0.0;
        for (a, b) in pieces {
            m0 += integrate_with(|t| self.eval(t).norm_sqr(), a, b, &opts)?.value;
            m1 += integrate_with(|t| (t - c) * self.eval(t).norm_sqr(), a, b, &opts)?.value;
            m2 += integrate_with(|t| (t - c) * (t - c) * self.eval(t).norm_sqr(), a, b, &opts)?.value;
        }
        let mean = m1 / m0;
        let var = m2 / m0 - mean * mean;
        if !(var > 0.0) {
            return Err(Error::NonFinite(format!("time variance {var}")));
        }
        Ok(var.sqrt())
    }

    /// Leading order n and coefficient α_n of φ near the final time, with
    /// φ(t) ≈ α_n τ^{-1/2} ((t − t2)/τ)^n.
    pub fn taylor_endpoint(&self) -> Result<(usize, f64)> {
        let (t1, t2) = self.domain();
        if !t2.is_finite() {
            return Err(Error::InvalidParameter("endpoint analysis needs finite t2".into()));
        }
        let span = if t1.is_finite() { (t2 - t1) / 12.0 } else { f64::INFINITY };
        let delta = (0.05 * self.tau).min(span);
        taylor_endpoint_fn(|t| self.eval(t), t2, self.tau, delta, 4)
    }
}

/// Endpoint Taylor analysis of an arbitrary function: fits a degree-6
/// polynomial through samples at t2 − jδ and returns the first coefficient
/// (in units of (t − t2)/τ, scaled by √τ) whose magnitude exceeds 1e-7.
pub fn taylor_endpoint_fn<F: Fn(f64) -> Complex64>(
    f: F,
    t2: f64,
    tau: f64,
    delta: f64,
    cap: usize,
) -> Result<(usize, f64)> {
    const DEG: usize = 6;
    let h = delta / tau;
    let mut mat = [[0.0f64; DEG + 1]; DEG + 1];
    let mut rhs_re = [0.0f64; DEG + 1];
    let mut rhs_im = [0.0f64; DEG + 1];
    for j in 0..=DEG {
        let x = -(j as f64);
        for k in 0..=DEG {
            mat[j][k] = x.powi(k as i32);
        }
        let v = f(t2 - j as f64 * delta) * tau.sqrt();
        rhs_re[j] = v.re;
        rhs_im[j] = v.im;
    }
    let cre = solve_dense(mat, rhs_re);
    let cim = solve_dense(mat, rhs_im);
    for k in 0..=cap.min(DEG) {
        let scale = h.powi(k as i32);
        let c = Complex64::new(cre[k], cim[k]) / scale;
        if c.norm() > 1e-7 {
            let sign = if c.re.abs() >= c.im.abs() { c.re.signum() } else { c.im.signum() };
            return Ok((k, sign * c.norm()));
        }
    }
    Err(Error::TaylorOrder { cap })
}

fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> [f64; N] {
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = b[row];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

/// ∫ |φ|² over the whole domain by adaptive quadrature (independent of the
/// closed-form cumulative norms).
pub fn quadrature_norm(shape: &PulseShape) -> Result<f64> {
    let (t1, t2) = shape.domain();
    let c = if t1.is_finite() && t2.is_finite() { 0.5 * (t1 + t2) } else { 0.0f64.clamp(t1, t2) };
    let lo: f64 = integrate(|t| shape.eval(t).norm_sqr(), t1, c)?;
    let hi: f64 = integrate(|t| shape.eval(t).norm_sqr(), c, t2)?;
    Ok(lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn sqrt3pi() -> f64 {
        3f64.sqrt() * PI
    }

    #[test]
    fn table1_peak_values() {
        let d = PulseShape::new(ShapeKind::DecreasingExp, 1.0).unwrap();
        assert_eq!(d.eval(0.0).re, 1.0);
        let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
        assert_eq!(s.eval(0.0).re, 1.0);
        assert_eq!(d.eval(-0.1), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn table1_time_variances() {
        let cases = [
            (ShapeKind::DecreasingExp, 1.0),
            (ShapeKind::IncreasingExp, 1.0),
            (ShapeKind::Sech, PI / (4.0 * 3f64.sqrt())),
            (ShapeKind::Lorentzian, 1.0),
            (ShapeKind::Gaussian, FRAC_1_SQRT_2),
        ];
        for (kind, tc) in cases {
            for tau in [0.5, 1.0, 3.0] {
                let s = PulseShape::new(kind, tau).unwrap();
                assert_relative_eq!(s.time_variance().unwrap(), tc * tau, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn closed_form_norms_match_quadrature() {
        for kind in ShapeKind::ANALYTIC {
            let s = PulseShape::new(kind, 1.3).unwrap();
            assert!((quadrature_norm(&s).unwrap() - 1.0).abs() < 1e-10, "{kind}");
            for t in [-2.0, -0.3, 0.0, 0.4, 1.7, 6.0] {
                let (t1, _) = s.domain();
                let q: f64 = integrate(|u| s.eval(u).norm_sqr(), t1, t).unwrap_or(0.0);
                let q = if t < t1 { 0.0 } else { q };
                assert!((s.cumulative(t) - q).abs() < 1e-11, "{kind} at {t}");
                assert!((s.cumulative(t) + s.remaining(t) - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn tail_remaining_is_accurate() {
        let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
        let exact = 0.5 * (1.0 - (2.0f64 * 10.0).tanh());
        let direct = 1.0 / (1.0 + (40.0f64).exp());
        assert_relative_eq!(s.remaining(10.0), direct, max_relative = 1e-12);
        assert!(exact >= 0.0);
        let l = PulseShape::new(ShapeKind::Lorentzian, 1.0).unwrap();
        let q: f64 = integrate(|u| l.eval(u).norm_sqr(), 80.0, f64::INFINITY).unwrap();
        assert_relative_eq!(l.remaining(80.0), q, max_relative = 1e-9);
        let g = PulseShape::new(ShapeKind::Gaussian, 1.0).unwrap();
        assert_relative_eq!(g.remaining(5.0), 0.5 * erfc(5.0), max_relative = 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for kind in ShapeKind::ANALYTIC {
            let s = PulseShape::new(kind, 0.8).unwrap();
            for t in [-1.1, -0.2, 0.3, 1.4] {
                let (t1, t2) = s.domain();
                if t - 1e-4 < t1 || t + 1e-4 > t2 {
                    continue;
                }
                let h = 1e-5;
                let fd = (s.eval(t + h) - s.eval(t - h)) / (2.0 * h);
                assert!((fd - s.deriv(t)).norm() < 1e-7, "{kind} at {t}");
            }
        }
    }

    #[test]
    fn truncation_renormalizes_and_is_idempotent() {
        let w = sqrt3pi();
        let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
        let tr = s.truncate(-w / 2.0, w / 2.0).unwrap();
        assert!((quadrature_norm(&tr).unwrap() - 1.0).abs() < 1e-10);
        assert!(tr.eval(w / 2.0).norm() > 0.0);
        assert_eq!(tr.eval(w / 2.0 + 1e-9), Complex64::new(0.0, 0.0));
        let again = tr.truncate(-w / 2.0, w / 2.0).unwrap();
        for t in tr.scan_grid(257) {
            assert_eq!(tr.eval(t).re.to_bits(), again.eval(t).re.to_bits());
        }
    }

    #[test]
    fn empty_truncation_errors() {
        let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
        assert!(matches!(s.truncate(1.0, 1.0), Err(Error::EmptyInterval { .. })));
        let d = PulseShape::new(ShapeKind::DecreasingExp, 1.0).unwrap();
        assert!(matches!(d.truncate(-3.0, -1.0), Err(Error::ZeroWeight { .. })));
    }

    #[test]
    fn shifted_truncation_vanishes_at_end() {
        let w = sqrt3pi();
        let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap();
        let tr = s.truncate_shifted(-w / 2.0, w / 2.0).unwrap();
        assert_eq!(tr.eval(w / 2.0).norm(), 0.0);
        assert!((quadrature_norm(&tr).unwrap() - 1.0).abs() < 1e-10);
        for t in [-2.0, 0.0, 1.0, 2.5] {
            let q: f64 = integrate(|u| tr.eval(u).norm_sqr(), -w / 2.0, t).unwrap();
            assert!((tr.cumulative(t) - q).abs() < 1e-11);
        }
        let (n, alpha) = tr.taylor_endpoint().unwrap();
        assert_eq!(n, 1);
        // slope oracle: φ'(t2) τ^{3/2}
        let slope = tr.deriv(w / 2.0).re;
        assert_relative_eq!(alpha, slope, max_relative = 1e-6);
    }

    #[test]
    fn endpoint_value_orders() {
        let w = sqrt3pi();
        let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap().truncate(-w / 2.0, w / 2.0).unwrap();
        let (n, alpha) = s.taylor_endpoint().unwrap();
        assert_eq!(n, 0);
        assert_relative_eq!(alpha, s.eval(w / 2.0).re, max_relative = 1e-9);
        let d = PulseShape::new(ShapeKind::DecreasingExp, 2.0).unwrap().truncate(0.0, 3.0).unwrap();
        let (n, alpha) = d.taylor_endpoint().unwrap();
        assert_eq!(n, 0);
        assert_relative_eq!(alpha, 2f64.sqrt() * d.eval(3.0).re, max_relative = 1e-9);
        assert!(PulseShape::new(ShapeKind::Sech, 1.0).unwrap().taylor_endpoint().is_err());
    }

    #[test]
    fn polynomial_onsets() {
        for n in 0..=2usize {
            let f = |t: f64| Complex64::new((t - 1.0).powi(n as i32) * 0.7, 0.0);
            let (k, a) = taylor_endpoint_fn(f, 1.0, 1.0, 0.05, 4).unwrap();
            assert_eq!(k, n);
            assert_relative_eq!(a, 0.7, max_relative = 1e-8);
        }
        let zero = |_: f64| Complex64::new(0.0, 0.0);
        assert!(matches!(
            taylor_endpoint_fn(zero, 0.0, 1.0, 0.05, 4),
            Err(Error::TaylorOrder { cap: 4 })
        ));
    }

    #[test]
    fn tabulated_roundtrip() {
        let src = PulseShape::new(ShapeKind::Gaussian, 1.0).unwrap();
        let t: Vec<f64> = (0..801).map(|i| -6.0 + 12.0 * i as f64 / 800.0).collect();
        let v: Vec<Complex64> = t
            .iter()
            .map(|&x| src.eval(x) * Complex64::from_polar(1.0, 0.3 * x))
            .collect();
        let tab = PulseShape::from_samples(t, v, None).unwrap();
        assert!((quadrature_norm(&tab).unwrap() - 1.0).abs() < 1e-10);
        assert_relative_eq!(tab.tau(), FRAC_1_SQRT_2, max_relative = 1e-6);
        assert!((tab.eval(0.37).norm() - src.eval(0.37).norm()).abs() < 1e-8);
        assert_relative_eq!(tab.cumulative(0.0), 0.5, max_relative = 1e-8);
    }

    #[test]
    fn csv_parsing() {
        let text = "t,re,im\n0,0,0\n1,1,0.5\n2,0.5,0\n3,0,0\n";
        let s = PulseShape::from_csv_reader(text.as_bytes(), Some(1.0)).unwrap();
        assert_eq!(s.domain(), (0.0, 3.0));
        assert!((quadrature_norm(&s).unwrap() - 1.0).abs() < 1e-10);
        let bad = "0,1\n1,2,3,4\n";
        assert!(PulseShape::from_csv_reader(bad.as_bytes(), Some(1.0)).is_err());
    }

    #[test]
    fn reversal_mirrors_window() {
        let s = PulseShape::new(ShapeKind::Sech, 1.0).unwrap().truncate(-1.0, 2.0).unwrap();
        let r = s.time_reversed();
        assert_eq!(r.domain(), (-1.0, 2.0));
        assert_eq!(r.eval(-1.0), s.eval(2.0).conj());
        assert!((r.cumulative(0.3) - s.remaining(0.7)).abs() < 1e-14);
        let back = r.time_reversed();
        assert_eq!(back.eval(0.123), s.eval(0.123));
        let d = PulseShape::new(ShapeKind::DecreasingExp, 1.0).unwrap().time_reversed();
        assert_eq!(d.domain().1, 0.0);
        assert_relative_eq!(d.eval(-1.0).re, (-0.5f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn exp_overlap_closed_forms_match_quadrature() {
        for kind in [ShapeKind::DecreasingExp, ShapeKind::IncreasingExp] {
            let s = PulseShape::new(kind, 0.7).unwrap();
            let (t1, t2) = s.domain();
            let ts = if t1.is_finite() { 0.4 } else { -1.2 };
            let rate = 1.3;
            let closed = s.exp_overlap(ts, t2, rate).unwrap();
            let q: f64 = integrate(|t| s.eval(t).re * (-rate * (t - ts)).exp(), ts, t2).unwrap();
            assert!((closed.re - q).abs() < 1e-13, "{kind}");
        }
    }

    proptest! {
        #[test]
        fn normalization_holds(kind_idx in 0usize..5, tau in 0.2f64..5.0, a in -3.0f64..0.5, len in 0.5f64..6.0, shifted in any::<bool>()) {
            let kind = ShapeKind::ANALYTIC[kind_idx];
            let s = PulseShape::new(kind, tau).unwrap();
            prop_assert!((quadrature_norm(&s).unwrap() - 1.0).abs() < 1e-10);
            let tr = if shifted { s.truncate_shifted(a * tau, (a + len) * tau) } else { s.truncate(a * tau, (a + len) * tau) };
            if let Ok(tr) = tr {
                prop_assert!((quadrature_norm(&tr).unwrap() - 1.0).abs() < 1e-10);
                prop_assert!((tr.cumulative(tr.t2()) - 1.0).abs() < 1e-10);
                prop_assert_eq!(tr.eval(tr.t2() + 1e-3 * tau), Complex64::new(0.0, 0.0));
                let again = if shifted { tr.truncate_shifted(a * tau, (a + len) * tau) } else { tr.truncate(a * tau, (a + len) * tau) };
                let again = again.unwrap();
                for t in tr.scan_grid(64) {
                    prop_assert_eq!(tr.eval(t), again.eval(t));
                }
            }
        }
    }
}

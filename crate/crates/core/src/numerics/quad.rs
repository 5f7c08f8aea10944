//! Adaptive Gauss-Kronrod quadrature (10/21-point pair) with support for
//! semi-infinite and infinite intervals through the transformation
//! t = a + (1 - s)/s.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be integrated: reals and complex numbers.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_958_109_831,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Tolerances and limits for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }
}

/// Integral estimate with its error bound.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult<V> {
    pub value: V,
    pub error: f64,
    pub evaluations: usize,
}

fn kronrod21<V: QuadValue, F: FnMut(f64) -> V + ?Sized>(f: &mut F, a: f64, b: f64) -> (V, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[10];
    let mut resg = V::zero();
    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        resg = resg + (f1 + f2) * WG[j];
        resk = resk + (f1 + f2) * WGK[jtw];
    }
    for j in 0..5 {
        let jtw = 2 * j;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        resk = resk + (f1 + f2) * WGK[jtw];
    }
    let value = resk * half;
    let err = ((resk - resg) * half).magnitude();
    (value, err)
}

struct Piece<V> {
    a: f64,
    b: f64,
    value: V,
    error: f64,
}

impl<V> PartialEq for Piece<V> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<V> Eq for Piece<V> {}
impl<V> PartialOrd for Piece<V> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Piece<V> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn adaptive_finite<V: QuadValue, F: FnMut(f64) -> V + ?Sized>(
    f: &mut F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult<V>> {
    let (value, error) = kronrod21(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut evaluations = 21;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.magnitude());
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            if total_err <= 1e3 * tol {
                break;
            }
            return Err(Error::Quadrature {
                a,
                b,
                estimate: total.magnitude(),
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = kronrod21(f, worst.a, mid);
        let (v2, e2) = kronrod21(f, mid, worst.b);
        evaluations += 42;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to remove drift from incremental updates
    let mut value = V::zero();
    let mut error = 0.0;
    for p in heap.iter() {
        value = value + p.value;
        error += p.error;
    }
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

/// Integrates `f` over [a, b]; either endpoint may be infinite.
pub fn integrate_with<V: QuadValue, F: FnMut(f64) -> V>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult<V>> {
    integrate_dyn(&mut f, a, b, opts)
}

fn integrate_dyn<V: QuadValue>(
    f: &mut dyn FnMut(f64) -> V,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult<V>> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::NonFinite("quadrature bound".into()));
    }
    if a == b {
        return Ok(QuadResult {
            value: V::zero(),
            error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        let r = integrate_dyn(f, b, a, opts)?;
        return Ok(QuadResult {
            value: r.value * -1.0,
            ..r
        });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive_finite(f, a, b, opts),
        (true, false) => {
            let mut g = |s: f64| {
                let t = a + (1.0 - s) / s;
                f(t) * (1.0 / (s * s))
            };
            adaptive_finite(&mut g, 0.0, 1.0, opts)
        }
        (false, true) => {
            let mut g = |s: f64| {
                let t = b - (1.0 - s) / s;
                f(t) * (1.0 / (s * s))
            };
            adaptive_finite(&mut g, 0.0, 1.0, opts)
        }
        (false, false) => {
            let upper = integrate_dyn(f, 0.0, f64::INFINITY, opts)?;
            let lower = integrate_dyn(f, f64::NEG_INFINITY, 0.0, opts)?;
            Ok(QuadResult {
                value: upper.value + lower.value,
                error: upper.error + lower.error,
                evaluations: upper.evaluations + lower.evaluations,
            })
        }
    }
}

/// Integrates `f` over [a, b] with default tolerances, returning the value only.
pub fn integrate<V: QuadValue, F: FnMut(f64) -> V>(f: F, a: f64, b: f64) -> Result<V> {
    integrate_with(f, a, b, &QuadOptions::default()).map(|r| r.value)
}

/// Nodes and weights of the 5-point Gauss-Legendre rule on [-1, 1].
pub const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_663_992_797_626_878_299,
    -0.538_469_310_105_683_091_036_314_420_700,
    0.0,
    0.538_469_310_105_683_091_036_314_420_700,
    0.906_179_845_938_663_992_797_626_878_299,
];
pub const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_087_514_264_040_720,
    0.478_628_670_499_366_468_041_291_514_836,
    0.568_888_888_888_888_888_888_888_888_889,
    0.478_628_670_499_366_468_041_291_514_836,
    0.236_926_885_056_189_087_514_264_040_720,
];

/// Fixed 5-point Gauss-Legendre rule on [a, b]; exact for polynomials of degree 9.
pub fn gauss_legendre5<V: QuadValue, F: FnMut(f64) -> V>(mut f: F, a: f64, b: f64) -> V {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = V::zero();
    for k in 0..5 {
        acc = acc + f(c + h * GL5_NODES[k]) * GL5_WEIGHTS[k];
    }
    acc * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let v: f64 = integrate(|x: f64| x.powi(7) - 3.0 * x * x, -1.0, 2.0).unwrap();
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert_relative_eq!(v, exact, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_whole_line() {
        let v: f64 = integrate(|x: f64| (-x * x).exp(), f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn lorentzian_tail() {
        let v: f64 = integrate(|x: f64| 1.0 / (1.0 + x * x), 1.0, f64::INFINITY).unwrap();
        assert_relative_eq!(v, std::f64::consts::FRAC_PI_4, max_relative = 1e-12);
    }

    #[test]
    fn complex_oscillatory() {
        let v: Complex64 =
            integrate(|x: f64| Complex64::new(0.0, 5.0 * x).exp(), 0.0, 3.0).unwrap();
        let exact = (Complex64::new(0.0, 15.0).exp() - 1.0) / Complex64::new(0.0, 5.0);
        assert!((v - exact).norm() < 1e-13);
    }

    #[test]
    fn reversed_bounds() {
        let v: f64 = integrate(|x: f64| x, 2.0, 0.0).unwrap();
        assert_relative_eq!(v, -2.0, max_relative = 1e-14);
    }

    #[test]
    fn kink_converges() {
        let v: f64 = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0).unwrap();
        assert_relative_eq!(v, 0.045 + 0.245, max_relative = 1e-11);
    }

    #[test]
    fn gl5_degree_nine() {
        let v: f64 = gauss_legendre5(|x: f64| x.powi(9) + x.powi(8), 0.0, 1.0);
        assert_relative_eq!(v, 0.1 + 1.0 / 9.0, max_relative = 1e-14);
    }
}

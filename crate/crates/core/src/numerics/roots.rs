//! Bracketed root finding and one-dimensional minimization.

use crate::error::{Error, Result};

/// Bisection on a bracket where `f(a)` and `f(b)` have opposite signs (or
/// `f(b)` is zero). Returns the left-most point of the final bracket at which
/// the sign of `f(a)` has been lost.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::RootBracketing {
            a,
            b,
            detail: format!("non-finite endpoint values {fa}, {fb}"),
        });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fa.signum() == fb.signum() && fb != 0.0 {
        return Err(Error::RootBracketing {
            a,
            b,
            detail: format!("no sign change ({fa}, {fb})"),
        });
    }
    let positive = fa > 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a) <= tol || m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if !fm.is_finite() {
            return Err(Error::RootBracketing {
                a,
                b,
                detail: format!("non-finite value at {m}"),
            });
        }
        if (fm > 0.0) == positive && fm != 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(b)
}

/// Golden-section search for a minimum of a unimodal `f` on [a, b].
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

//! Three-stage Radau IIA (order 5) for stiff problems, with step-doubling
//! error control and the collocation polynomial as dense output (third
//! order, so dense values are coarser than the step endpoints).

use nalgebra::{DMatrix, DVector};

use super::ode::{DenseStep, OdeOptions, OdeSolution};
use crate::error::{Error, Result};

const S6: f64 = 2.449_489_742_783_178;

fn tableau() -> ([f64; 3], [[f64; 3]; 3]) {
    let c = [(4.0 - S6) / 10.0, (4.0 + S6) / 10.0, 1.0];
    let a = [
        [(88.0 - 7.0 * S6) / 360.0, (296.0 - 169.0 * S6) / 1800.0, (-2.0 + 3.0 * S6) / 225.0],
        [(296.0 + 169.0 * S6) / 1800.0, (88.0 + 7.0 * S6) / 360.0, (-2.0 - 3.0 * S6) / 225.0],
        [(16.0 - S6) / 36.0, (16.0 + S6) / 36.0, 1.0 / 9.0],
    ];
    (c, a)
}

fn jacobian<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], fy: &[f64; N]) -> [[f64; N]; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut j = [[0.0; N]; N];
    for k in 0..N {
        let d = 1e-7 * y[k].abs().max(1.0);
        let mut yp = *y;
        yp[k] += d;
        let fp = f(t, &yp);
        for i in 0..N {
            j[i][k] = (fp[i] - fy[i]) / d;
        }
    }
    j
}

/// One Radau step; returns the stage values (the last is the new state).
fn step<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], h: f64, opts: &OdeOptions) -> Option<[[f64; N]; 3]>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let (c, a) = tableau();
    let n3 = 3 * N;
    let mut jac = Vec::with_capacity(3);
    for ci in c {
        let fy = f(t + ci * h, y);
        jac.push(jacobian(f, t + ci * h, y, &fy));
    }
    let mut m = DMatrix::<f64>::identity(n3, n3);
    for i in 0..3 {
        for j in 0..3 {
            for r in 0..N {
                for k in 0..N {
                    m[(i * N + r, j * N + k)] -= h * a[i][j] * jac[j][r][k];
                }
            }
        }
    }
    let lu = m.lu();
    let mut z = [[0.0; N]; 3];
    for _ in 0..10 {
        let mut fz = [[0.0; N]; 3];
        for j in 0..3 {
            let mut yj = *y;
            for k in 0..N {
                yj[k] += z[j][k];
            }
            fz[j] = f(t + c[j] * h, &yj);
        }
        let mut res = DVector::<f64>::zeros(n3);
        for i in 0..3 {
            for r in 0..N {
                let mut acc = z[i][r];
                for j in 0..3 {
                    acc -= h * a[i][j] * fz[j][r];
                }
                res[i * N + r] = -acc;
            }
        }
        let dz = lu.solve(&res)?;
        let mut norm = 0.0f64;
        for i in 0..3 {
            for r in 0..N {
                let d = dz[i * N + r];
                z[i][r] += d;
                norm = norm.max(d.abs() / (opts.atol + opts.rtol * y[r].abs()));
            }
        }
        if !norm.is_finite() {
            return None;
        }
        if norm < 1e-3 {
            let mut out = [[0.0; N]; 3];
            for i in 0..3 {
                for r in 0..N {
                    out[i][r] = y[r] + z[i][r];
                }
            }
            return Some(out);
        }
    }
    None
}

/// Collocation cubic through (0, y0), (c1, Y1), (c2, Y2), (1, Y3).
fn dense<const N: usize>(t0: f64, h: f64, y0: &[f64; N], st: &[[f64; N]; 3]) -> DenseStep<N> {
    let (c, _) = tableau();
    let x = [0.0, c[0], c[1], 1.0];
    let mut r = [[0.0; N]; 6];
    for k in 0..N {
        let v = [y0[k], st[0][k], st[1][k], st[2][k]];
        let d1 = [(v[1] - v[0]) / x[1], (v[2] - v[1]) / (x[2] - x[1]), (v[3] - v[2]) / (x[3] - x[2])];
        let d2 = [(d1[1] - d1[0]) / x[2], (d1[2] - d1[1]) / (x[3] - x[1])];
        let d3 = (d2[1] - d2[0]) / x[3];
        // monomial coefficients of v0 + d1 θ + d2 θ(θ - x1) + d3 θ(θ - x1)(θ - x2)
        let p1 = d1[0] - d2[0] * x[1] + d3 * x[1] * x[2];
        let p2 = d2[0] - d3 * (x[1] + x[2]);
        let p3 = d3;
        r[0][k] = v[0];
        r[1][k] = p1 + p2 + p3;
        r[2][k] = -p2 - p3;
        r[3][k] = -p3;
    }
    DenseStep::from_basis(t0, h, r)
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` with Radau IIA.
pub fn radau5<const N: usize, F>(mut f: F, t0: f64, t1: f64, y0: [f64; N], opts: &OdeOptions) -> Result<OdeSolution<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut sol = OdeSolution {
        t: vec![t0],
        y: vec![y0],
        dense: Vec::new(),
    };
    if !(t1 > t0) {
        return Ok(sol);
    }
    let span = t1 - t0;
    let h_max = opts.h_max.min(span);
    let mut h = opts.h_init.unwrap_or(1e-3 * span).min(h_max);
    let mut t = t0;
    let mut y = y0;
    let mut steps = 0usize;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::StepSizeCollapse { t, h });
        }
        steps += 1;
        let last = t + h >= t1 || t1 - (t + h) < (1e-12 * span).min(0.01 * h);
        if last {
            h = t1 - t;
        }
        let attempt = step(&mut f, t, &y, h, opts).and_then(|full| {
            let a = step(&mut f, t, &y, 0.5 * h, opts)?;
            let b = step(&mut f, t + 0.5 * h, &a[2], 0.5 * h, opts)?;
            Some((full, a, b))
        });
        let Some((full, a, b)) = attempt else {
            h *= 0.25;
            if h < opts.h_min * span.max(1.0) {
                return Err(Error::StepSizeCollapse { t, h });
            }
            continue;
        };
        let y_new = b[2];
        let mut err = 0.0;
        for i in 0..N {
            let e = (y_new[i] - full[2][i]) / 31.0;
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / N as f64).sqrt();
        if err <= 1.0 {
            let tm = t + 0.5 * h;
            sol.dense.push(dense(t, 0.5 * h, &y, &a));
            sol.dense.push(dense(tm, 0.5 * h, &a[2], &b));
            sol.t.push(tm);
            sol.y.push(a[2]);
            t = if last { t1 } else { t + h };
            y = y_new;
            sol.t.push(t);
            sol.y.push(y);
            h = (h * (0.9 * err.max(1e-12).powf(-1.0 / 6.0)).clamp(0.2, 4.0)).min(h_max);
        } else {
            h *= (0.9 * err.powf(-1.0 / 6.0)).clamp(0.1, 0.9);
            if h < opts.h_min * span.max(1.0) {
                return Err(Error::StepSizeCollapse { t, h });
            }
        }
    }
    Ok(sol)
}

//! Natural cubic splines over real or complex samples on a nonuniform grid.

use super::quad::QuadValue;
use crate::error::{Error, Result};

/// Natural cubic spline (zero second derivative at both ends).
#[derive(Clone, Debug)]
pub struct CubicSpline<V> {
    x: Vec<f64>,
    y: Vec<V>,
    m: Vec<V>,
}

impl<V: QuadValue> CubicSpline<V> {
    pub fn new(x: Vec<f64>, y: Vec<V>) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::InvalidParameter("spline x/y length mismatch".into()));
        }
        if n < 2 {
            return Err(Error::InvalidParameter("spline needs at least two knots".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "spline knots must be strictly increasing".into(),
            ));
        }
        let mut m = vec![V::zero(); n];
        if n > 2 {
            // Thomas algorithm for the interior second derivatives
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![V::zero(); k];
            let mut sub = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                sub[i] = h0;
                rhs[i] = ((y[i + 2] - y[i + 1]) * (1.0 / h1) - (y[i + 1] - y[i]) * (1.0 / h0)) * 6.0;
            }
            for i in 1..k {
                let h = x[i + 1] - x[i];
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * h;
                rhs[i] = rhs[i] - rhs[i - 1] * w;
            }
            m[k] = rhs[k - 1] * (1.0 / diag[k - 1]);
            for i in (0..k - 1).rev() {
                let h = x[i + 2] - x[i + 1];
                m[i + 1] = (rhs[i] - m[i + 2] * h) * (1.0 / diag[i]);
            }
        }
        Ok(Self { x, y, m })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[V] {
        &self.y
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        if t <= self.x[0] {
            return 0;
        }
        if t >= self.x[n - 1] {
            return n - 2;
        }
        self.x.partition_point(|&xi| xi <= t).saturating_sub(1).min(n - 2)
    }

    /// Spline value; extrapolates with the end polynomials outside the knots.
    pub fn eval(&self, t: f64) -> V {
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        self.y[i] * a
            + self.y[i + 1] * b
            + (self.m[i] * (a * a * a - a) + self.m[i + 1] * (b * b * b - b)) * (h * h / 6.0)
    }

    /// First derivative of the spline.
    pub fn deriv(&self, t: f64) -> V {
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) * (1.0 / h)
            + (self.m[i + 1] * (3.0 * b * b - 1.0) - self.m[i] * (3.0 * a * a - 1.0)) * (h / 6.0)
    }
}

/// Piecewise-linear interpolant.
#[derive(Clone, Debug)]
pub struct LinearInterp<V> {
    x: Vec<f64>,
    y: Vec<V>,
}

impl<V: QuadValue> LinearInterp<V> {
    pub fn new(x: Vec<f64>, y: Vec<V>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::InvalidParameter("linear interpolant needs matching knots".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "interpolation knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn eval(&self, t: f64) -> V {
        let n = self.x.len();
        let i = if t <= self.x[0] {
            0
        } else if t >= self.x[n - 1] {
            n - 2
        } else {
            self.x.partition_point(|&xi| xi <= t).saturating_sub(1).min(n - 2)
        };
        let h = self.x[i + 1] - self.x[i];
        let b = (t - self.x[i]) / h;
        self.y[i] * (1.0 - b) + self.y[i + 1] * b
    }

    pub fn deriv(&self, t: f64) -> V {
        let n = self.x.len();
        let i = if t <= self.x[0] {
            0
        } else if t >= self.x[n - 1] {
            n - 2
        } else {
            self.x.partition_point(|&xi| xi <= t).saturating_sub(1).min(n - 2)
        };
        (self.y[i + 1] - self.y[i]) * (1.0 / (self.x[i + 1] - self.x[i]))
    }
}

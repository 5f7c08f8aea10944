//! Closed-form thresholds and inefficiency expansions: near-threshold and
//! long-pulse behaviour of the infinite-window shapes, and the end-point
//! expansion for truncated pulses.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::control;
use crate::error::{Error, Result};
use crate::shapes::{PulseShape, ShapeKind};

/// Which expansion produced an [`AsymptoteResult`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AsymptoteRegime {
    BelowThreshold,
    AtUnit,
    LargeTau,
    Truncation,
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoteResult {
    pub eta: f64,
    pub regime: AsymptoteRegime,
    pub validity_note: String,
}

impl AsymptoteResult {
    fn new(eta: f64, regime: AsymptoteRegime, note: &str) -> Self {
        Self {
            eta: eta.clamp(0.0, 1.0),
            regime,
            validity_note: note.to_string(),
        }
    }
}

/// Threshold time T_a in units of 1/Γ, if the shape has one.
pub fn threshold_time(kind: ShapeKind) -> Option<f64> {
    match kind {
        ShapeKind::DecreasingExp => Some(0.5),
        ShapeKind::Sech => Some(2.0),
        ShapeKind::Lorentzian => Some(23.0 / 25.0),
        _ => None,
    }
}

/// Inefficiency expansion for an untruncated shape at rate Γ and width τ.
pub fn table1_inefficiency(kind: ShapeKind, gamma: f64, tau: f64) -> Result<AsymptoteResult> {
    if !(gamma > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameter("rate and width must be positive".into()));
    }
    let x = gamma * tau;
    use AsymptoteRegime::*;
    let r = match kind {
        ShapeKind::DecreasingExp => {
            if x >= 0.5 {
                AsymptoteResult::new(1.0, AtUnit, "above threshold")
            } else {
                AsymptoteResult::new(1.0 - (0.5 - x).powi(2), BelowThreshold, "valid as τ approaches T_a from below")
            }
        }
        ShapeKind::Sech => {
            if x >= 2.0 {
                AsymptoteResult::new(1.0, AtUnit, "above threshold")
            } else {
                AsymptoteResult::new(1.0 - (2.0 - x).powi(3) / 96.0, BelowThreshold, "valid as τ approaches T_a from below")
            }
        }
        ShapeKind::Lorentzian => {
            if x >= 23.0 / 25.0 {
                AsymptoteResult::new(1.0, AtUnit, "above threshold")
            } else {
                AsymptoteResult::new(
                    1.0 - 0.15 * (23.0 / 25.0 - x).powf(2.5),
                    BelowThreshold,
                    "single critical time; a second critical time changes the constant",
                )
            }
        }
        ShapeKind::Gaussian => {
            let inef = (1.0 - 9.0 / (16.0 * x.powi(4)) - 1.0 / (2.0 * x * x) - x * x).exp()
                / (16.0 * PI.sqrt() * x.powi(5));
            AsymptoteResult::new(1.0 - inef, LargeTau, "valid for Γτ ≫ 1")
        }
        ShapeKind::IncreasingExp => {
            if x > 0.5 {
                AsymptoteResult::new(inc_exp_eta(x), LargeTau, "exact for all Γτ > 1/2")
            } else {
                let shape = PulseShape::new(ShapeKind::IncreasingExp, tau)?;
                let res = control::optimize_c(&shape, gamma)?;
                AsymptoteResult::new(res.eta, BelowThreshold, "Γτ ≤ 1/2: evaluated by the retrieval pipeline")
            }
        }
        ShapeKind::Tabulated => {
            return Err(Error::InvalidParameter("no expansion for tabulated shapes".into()))
        }
    };
    Ok(r)
}

/// η = 4^{−ξ}((1+ξ)/(1+2ξ))^{−1−2ξ} with ξ = 1/(2Γτ − 1), for Γτ > 1/2.
pub fn inc_exp_eta(gamma_tau: f64) -> f64 {
    let xi = 1.0 / (2.0 * gamma_tau - 1.0);
    let ln = -xi * 4f64.ln() + (-1.0 - 2.0 * xi) * ((1.0 + xi) / (1.0 + 2.0 * xi)).ln();
    ln.exp()
}

/// Exact decreasing-exponential efficiency.
pub fn dec_exp_exact_eta(gamma: f64, tau: f64) -> f64 {
    let x = gamma * tau;
    if x >= 0.5 {
        1.0
    } else {
        8.0 * x / (2.0 * x + 1.0).powi(2)
    }
}

/// End-point expansion coefficient β_n for n ≤ 2.
pub fn beta(n: usize) -> Result<f64> {
    let e32 = 1.5f64.exp();
    let e52 = 2.5f64.exp();
    match n {
        0 => Ok(LN_2 - 0.5),
        1 => Ok(9.0 * (e32 - 4.0) / (16.0 * (e32 - 1.0))),
        2 => Ok(625.0 * (16.0 - e52) / (128.0 * (3.0 * e52 + 2.0))),
        _ => Err(Error::UnsupportedOrder(n)),
    }
}

/// 1 − η ≈ |α_n|² β_n / (Γτ)^{2n+1}.
pub fn truncation_inefficiency(n: usize, alpha_n: f64, gamma: f64, tau: f64) -> Result<f64> {
    Ok(alpha_n * alpha_n * beta(n)? / (gamma * tau).powi(2 * n as i32 + 1))
}

/// Approximate critical time of a truncated pulse ending at `t2`.
pub fn truncation_tc(n: usize, alpha_n: f64, gamma: f64, tau: f64, eta: f64, t2: f64) -> Result<f64> {
    if n > 2 {
        return Err(Error::UnsupportedOrder(n));
    }
    let k = 2 * n as i32 + 1;
    let corr = tau.powi(k) * gamma.powi(2 * n as i32) / (alpha_n * alpha_n) * 4f64.powi(n as i32) * (1.0 - eta)
        / (k as f64).powi(2 * n as i32 - 1);
    Ok(t2 - k as f64 / (2.0 * gamma) - corr)
}

/// Asymptotic efficiency for any supported shape: the end-point expansion
/// when the shape has a finite end, the infinite-window expansion otherwise.
pub fn asymptote_for(shape: &PulseShape, gamma: f64) -> Result<AsymptoteResult> {
    if shape.t2().is_finite() && shape.is_truncated() {
        let (n, alpha) = shape.taylor_endpoint()?;
        let inef = truncation_inefficiency(n, alpha, gamma, shape.tau())?;
        Ok(AsymptoteResult::new(1.0 - inef, AsymptoteRegime::Truncation, &format!("end-point order n = {n}; valid for Γτ ≫ 1")))
    } else {
        table1_inefficiency(shape.kind(), gamma, shape.tau())
    }
}

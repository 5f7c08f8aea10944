//! Physical parameters of the memory, derived rates, regime scores and the
//! lossless-to-lossy efficiency rescaling.
//!
//! Only the collective coupling g√N enters the equations, so g and N are
//! stored as a single product.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates of the cavity-ensemble system, all in inverse time units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    pub g_sqrt_n: f64,
    pub kappa_in: f64,
    pub kappa_loss: f64,
    pub gamma: f64,
    pub delta: f64,
}

/// Cooperativity, with the lossless γ = 0 case kept as an explicit flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cooperativity {
    Finite(f64),
    Infinite,
}

impl Cooperativity {
    pub fn value(&self) -> f64 {
        match self {
            Cooperativity::Finite(c) => *c,
            Cooperativity::Infinite => f64::INFINITY,
        }
    }
}

/// Quantities derived from [`MemoryParams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Derived {
    pub kappa: f64,
    /// Effective radiative linewidth Γ = (g√N)²/κ_in.
    pub gamma_eff: f64,
    /// Total atomic decay Γ̃ = γ + (g√N)²/κ.
    pub gamma_tilde: f64,
    pub cooperativity: Cooperativity,
}

/// Dimensionless regime scores for a characteristic time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeScores {
    pub atom_limited: f64,
    pub cavity_limited: f64,
    pub adiabatic: bool,
}

pub const DEFAULT_ADIABATIC_THRESHOLD: f64 = 10.0;

impl MemoryParams {
    pub fn new(g_sqrt_n: f64, kappa_in: f64, kappa_loss: f64, gamma: f64, delta: f64) -> Self {
        Self {
            g_sqrt_n,
            kappa_in,
            kappa_loss,
            gamma,
            delta,
        }
    }

    /// Lossless system with effective linewidth Γ at the given κ_in.
    pub fn lossless_with_rate(gamma_eff: f64, kappa_in: f64, delta: f64) -> Self {
        Self::new((gamma_eff * kappa_in).sqrt(), kappa_in, 0.0, 0.0, delta)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g_sqrtN", self.g_sqrt_n),
            ("kappa_in", self.kappa_in),
            ("kappa_loss", self.kappa_loss),
            ("gamma", self.gamma),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("delta must be finite".into()));
        }
        if !(self.kappa_in > 0.0) {
            return Err(Error::InvalidParameter("kappa_in must be positive (no input port)".into()));
        }
        Ok(())
    }

    pub fn derived(&self) -> Result<Derived> {
        self.validate()?;
        let g2 = self.g_sqrt_n * self.g_sqrt_n;
        let kappa = self.kappa_in + self.kappa_loss;
        let cooperativity = if self.gamma > 0.0 {
            Cooperativity::Finite(g2 / (kappa * self.gamma))
        } else {
            Cooperativity::Infinite
        };
        Ok(Derived {
            kappa,
            gamma_eff: g2 / self.kappa_in,
            gamma_tilde: self.gamma + g2 / kappa,
            cooperativity,
        })
    }

    /// κ·t and Γ·t for a characteristic time, and whether both exceed `threshold`.
    pub fn regime_check(&self, t_char: f64, threshold: f64) -> Result<RegimeScores> {
        let d = self.derived()?;
        let atom_limited = d.kappa * t_char;
        let cavity_limited = d.gamma_eff * t_char;
        Ok(RegimeScores {
            atom_limited,
            cavity_limited,
            adiabatic: atom_limited >= threshold && cavity_limited >= threshold,
        })
    }

    /// Lossy efficiency from the lossless one: η = [C/(1+C)]·(κ_in/κ)·η⁰.
    pub fn loss_rescale(&self, eta0: f64) -> Result<f64> {
        let d = self.derived()?;
        let port = if self.kappa_loss == 0.0 {
            1.0
        } else {
            self.kappa_in / d.kappa
        };
        let coop = match d.cooperativity {
            Cooperativity::Infinite => 1.0,
            Cooperativity::Finite(c) => c / (1.0 + c),
        };
        Ok(coop * port * eta0)
    }

    /// Parses the flat key=value format (keys g_sqrtN, kappa_in, kappa_loss,
    /// gamma, delta; `#` starts a comment). Missing keys other than kappa_in
    /// default to zero.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = MemoryParams::new(0.0, f64::NAN, 0.0, 0.0, 0.0);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number '{}'", lineno + 1, value.trim())))?;
            match key.trim() {
                "g_sqrtN" | "g_sqrt_n" => p.g_sqrt_n = value,
                "kappa_in" => p.kappa_in = value,
                "kappa_loss" => p.kappa_loss = value,
                "gamma" => p.gamma = value,
                "delta" => p.delta = value,
                other => return Err(Error::Parse(format!("line {}: unknown key '{other}'", lineno + 1))),
            }
        }
        if p.kappa_in.is_nan() {
            return Err(Error::Parse("missing kappa_in".into()));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl FromStr for MemoryParams {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for MemoryParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "g_sqrtN = {}", self.g_sqrt_n)?;
        writeln!(f, "kappa_in = {}", self.kappa_in)?;
        writeln!(f, "kappa_loss = {}", self.kappa_loss)?;
        writeln!(f, "gamma = {}", self.gamma)?;
        writeln!(f, "delta = {}", self.delta)
    }
}

//! Control synthesis and simulation for cavity-assisted photonic quantum
//! memories built on Λ-type atomic ensembles.
//!
//! Rates are in inverse time units and times in matching units; the CLI uses
//! microseconds throughout.

pub mod asymptotics;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod oct;
pub mod numerics;
pub mod shapes;

pub use error::{Error, Result};
pub use num_complex::Complex64;

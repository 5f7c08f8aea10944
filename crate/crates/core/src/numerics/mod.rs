//! Numerical building blocks: quadrature, splines, root finding, ODE
//! integration and quasi-Newton minimization.

pub mod lbfgs;
pub mod ode;
pub mod quad;
pub mod radau;
pub mod roots;
pub mod spline;

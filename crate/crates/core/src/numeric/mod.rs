//! Small numerical building blocks: adaptive quadrature and cubic splines.

pub mod quad;
pub mod spline;

pub use quad::{integrate, Quadrature};
pub use spline::NaturalCubicSpline;

//! Monte Carlo estimators for derivatives of Feynman-Kac semigroups on
//! Riemannian manifolds.

pub mod geometry;
pub mod pathsim;
pub mod transport;
pub mod estimators;

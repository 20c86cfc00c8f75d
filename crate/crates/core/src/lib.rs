//! Numerical laboratory for positive stable solutions of `-Δu = f(x, u)`,
//! `u = 0` on the boundary, on rotationally symmetric domains in `R^n`.
//!
//! The axisymmetric problem is reduced to the meridian half-plane `(r, z)`
//! and discretized with an embedded-boundary finite-difference stencil. On
//! top of the solver sit a first-eigenvalue certificate for stability, a
//! critical point census with Hessian classification, quantitative checks of
//! symmetry and monotonicity, a domain homotopy driver, and an independent
//! three-dimensional voxel oracle.

pub mod continuation;
pub mod domain;
pub mod error;
pub mod exec;
pub mod field;
pub mod grid;
pub mod morse;
pub mod nonlinearity;
pub mod oracle3d;
pub mod solver;
pub mod stability;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Exec;

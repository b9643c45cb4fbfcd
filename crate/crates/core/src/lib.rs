//! Anisotropic Cahn–Hilliard equation with degenerate mobility on a flat torus,
//! discretized by finite differences and regularized by a parameter `δ`.

// `!(x > 0.0)` is the NaN-rejecting form of a range check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anisotropy;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod material;
mod quadrature;
pub mod stepper;

pub use anisotropy::{AnisotropyConstants, AnisotropyFamily, AnisotropySpec};
pub use error::{Error, Result};
pub use grid::{Field, SpectralSolver, TorusGrid, VectorField};
pub use material::{MaterialSpec, Order, Potential, RegularizedMaterial};
pub use stepper::{advance, Safeguard, Scheme, SimState, SolverConfig};

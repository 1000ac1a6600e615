//! Growth rates of linear patch models with periodic growth and migration.
//!
//! The central quantity is the common Lyapunov exponent `Λ(m, T)` of
//! `x' = (R(t/T) + m L(t/T)) x`, computed from the Perron root of the
//! one-period monodromy matrix, together with its limits in `m` and `T`,
//! critical curves `Λ = 0`, and a Monte-Carlo estimator for Markov-switched
//! environments.

// NaN-aware guards read as `!(x > 0.0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod explorer;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod spectral;
pub mod stochastic;

pub use error::{Error, Result};
pub use model::{ModelParameters, PatchModel, PeriodicMatrixFunction, ValidationStatus};

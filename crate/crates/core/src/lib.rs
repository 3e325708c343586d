//! Numerical laboratory for gradient descent beyond the edge of stability.
//!
//! The crate covers 1-D objectives and their period-2 orbits ([`scalar1d`]),
//! a generic GD engine with period detection and sharpness probes
//! ([`dynamics`]), two-parameter scalar factorization and its balancing
//! ([`factor2d`]), the single-neuron ReLU teacher-student model ([`neuron`]),
//! matrix factorization around symmetric and quasi-symmetric minima
//! ([`matfac`]), and a config-driven experiment runner ([`experiment`]).

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod factor2d;
pub mod linalg;
pub mod matfac;
pub mod neuron;
pub mod rng;
pub mod scalar1d;

pub use error::{EosError, Result};

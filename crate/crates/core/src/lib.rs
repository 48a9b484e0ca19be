//! Markovian measurement-based feedback control of a quantum particle in a
//! harmonic potential.
//!
//! The Gaussian-state theory lives in [`moments`], [`control`] and
//! [`trajectories`]. [`gridsim`] and [`fockspace`] simulate the full stochastic
//! and master equations for cross-checks and non-Gaussian potentials.

pub mod control;
pub mod error;
pub mod fockspace;
pub mod gridsim;
pub mod moments;
pub mod quadratures;
pub mod trajectories;

pub use error::{Error, Result};
pub use quadratures::{FeedbackGains, LabGains, OscillatorConfig, QuadratureFrame};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

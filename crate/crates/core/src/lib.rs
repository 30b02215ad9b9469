//! Anisotropic scaling limits of linear random fields on `Z²` with singular
//! spectral densities.
//!
//! The crate predicts the scaling exponents, amplitude constants and limit
//! covariances of anisotropic partial sums, and checks them against exact
//! covariance computations and Monte Carlo simulation.

pub mod cli;
pub mod error;
pub mod expr;
pub mod lab;
pub mod model;
pub mod oracle;
pub mod output;
pub mod quadrature;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
pub use model::{ModelSpec, Regime, SpectralModel};

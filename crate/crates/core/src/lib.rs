//! Anisotropic Gaussian random fields defined through harmonizable spectral
//! representations.
//!
//! Two families are covered: the solution of a stochastic heat equation
//! driven by noise that is fractional in time and Riesz-colored in space,
//! and a product-kernel field with non-stationary increments. The crate
//! evaluates their covariances by quadrature, samples exact Gaussian
//! ensembles and computes the statistics behind small-ball, Chung and
//! modulus-of-continuity results.

pub mod covariance;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod grid;
pub mod models;
pub mod quadrature;
pub mod sampler;
pub mod special;

pub use error::{Error, Result};
pub use exec::Execution;
pub use models::{
    delta_metric, derive_exponents, noise_constants, validate_model, Exponents, FieldModel,
    NoiseConstants, Point, ProductModel, Rectangle, SpdeModel, ValidationReport,
};
pub use quadrature::{IntegralResult, QuadratureSpec};

//! Quadrature for the singular spectral integrals and the time-domain oracle.

mod gk;
mod kernel;
mod oracle;
mod spectral;
mod tails;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gk::{geometric_breaks, integrate, integrate_with_breaks, Quad, Tolerance};
pub use kernel::{phi_h, TauKernel, TimePair};
pub use oracle::{riesz_constant, time_domain_inner_product, transition_density};
pub use spectral::{weighted_spectral_integral, SpectralIntegrand, SpectralOrder};
pub use tails::{oscillatory_tail, power_tail, wynn_epsilon, Oscillator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SingularityTransform {
    /// Power-law substitutions absorbing |τ|^{1−2H} and |ξ|^{-β}.
    #[default]
    Power,
    /// Integrate in the original variables.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Evaluation budget of each one-dimensional adaptive pass.
    pub max_evals: usize,
    /// Radial truncation R of the spectral variable.
    pub tail_cutoff: f64,
    /// Add the analytic envelope tail beyond R (otherwise plain truncation).
    pub tail_extrapolation: bool,
    pub singularity_transform: SingularityTransform,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-12,
            max_evals: 2_000_000,
            tail_cutoff: 64.0,
            tail_extrapolation: true,
            singularity_transform: SingularityTransform::Power,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must be positive (rel {}, abs {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_evals < 1000 {
            return Err(Error::InvalidArgument(format!(
                "max_evals must be at least 1000, got {}",
                self.max_evals
            )));
        }
        if !(self.tail_cutoff > 0.0) || !self.tail_cutoff.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tail_cutoff must be positive and finite, got {}",
                self.tail_cutoff
            )));
        }
        Ok(())
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance::new(self.abs_tol, self.rel_tol, self.max_evals)
    }

    /// Same spec with both tolerances multiplied by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evals: usize,
    /// False when some adaptive pass stopped on its budget.
    pub converged: bool,
    pub truncation_note: String,
}

impl IntegralResult {
    pub fn from_quad(q: Quad, note: impl Into<String>) -> Self {
        Self {
            value: q.value,
            error_estimate: q.error,
            evals: q.evals,
            converged: q.converged,
            truncation_note: note.into(),
        }
    }
}

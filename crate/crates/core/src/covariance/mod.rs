//! Covariances, increment variances, Gram matrices, conditional variances
//! and frequency-band variances for both field families.

mod gram;
mod product;
mod scans;
mod spde;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FieldModel, Point};
use crate::quadrature::{IntegralResult, Quad, QuadratureSpec};

pub(crate) use spde::stationary_step_mass;
pub use gram::{
    conditional_variance, conditional_variance_matrix, fingerprint, gram, increment_gram, variogram, Gram,
};
pub use scans::{
    empirical_c2, low_band_increment_scan, metric_equivalence_scan, strong_lnd_scan,
    LndConfiguration, LndRatio, LowBandReport, MetricScanReport,
};

/// A frequency interval [lo, hi) of the band decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    /// `f64::INFINITY` for an unbounded band.
    pub hi: f64,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0) || !(hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "band needs 0 <= lo < hi, got [{lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn full() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    pub fn is_full(&self) -> bool {
        self.lo == 0.0 && self.hi.is_infinite()
    }
}

fn check_points(model: &FieldModel, p: &Point, q: &Point) -> Result<()> {
    p.check_for(model)?;
    q.check_for(model)
}

fn to_result(q: Quad, note: &str) -> IntegralResult {
    IntegralResult::from_quad(q, note)
}

/// E[v(p) v(q)] with its quadrature diagnostics.
pub fn pair_covariance_detailed(
    model: &FieldModel,
    p: &Point,
    q: &Point,
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    band_pair_covariance_detailed(model, Band::full(), p, q, spec)
}

pub fn pair_covariance(model: &FieldModel, p: &Point, q: &Point, spec: &QuadratureSpec) -> Result<f64> {
    pair_covariance_detailed(model, p, q, spec).map(|r| r.value)
}

/// Covariance of the band components of v at p and q.
pub fn band_pair_covariance_detailed(
    model: &FieldModel,
    band: Band,
    p: &Point,
    q: &Point,
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    check_points(model, p, q)?;
    match model {
        FieldModel::Spde(m) => {
            let e = spde::SpdeEngine::new(m, spec)?;
            let terms = spde::covariance_terms(p, q);
            let quad = if band.is_full() {
                e.integrate_terms(&terms)?
            } else {
                e.integrate_terms_band(&terms, band.lo, band.hi)?
            };
            Ok(to_result(quad, "radial integral of closed-form time kernels"))
        }
        FieldModel::Product(m) => {
            let e = product::ProductEngine::new(m, spec)?;
            let f = product::covariance_factors(p, q);
            let quad = if band.is_full() {
                e.integrate(&f)?
            } else {
                e.integrate_region(&f, band.lo, band.hi)?
            };
            Ok(to_result(
                quad,
                if band.is_full() {
                    "subordinated stable-density transforms"
                } else {
                    "iterated integral over the positive orthant"
                },
            ))
        }
    }
}

pub fn band_pair_covariance(
    model: &FieldModel,
    band: Band,
    p: &Point,
    q: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    band_pair_covariance_detailed(model, band, p, q, spec).map(|r| r.value)
}

/// E|v_band(p) − v_band(q)|².
pub fn band_increment_variance(
    model: &FieldModel,
    band: Band,
    p: &Point,
    q: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_points(model, p, q)?;
    if p == q {
        return Ok(0.0);
    }
    let v = match model {
        FieldModel::Spde(m) => {
            let e = spde::SpdeEngine::new(m, spec)?;
            let terms = spde::increment_terms(p, q);
            let quad = if band.is_full() {
                e.integrate_terms(&terms)?
            } else {
                e.integrate_terms_band(&terms, band.lo, band.hi)?
            };
            quad.value
        }
        FieldModel::Product(m) => {
            let e = product::ProductEngine::new(m, spec)?;
            match product::axis_increment_factors(p, q) {
                Some(f) => e.integrate_region(&f, band.lo, band.hi)?.value,
                None if band.is_full() => {
                    let f = product::covariance_factors;
                    e.integrate_combination(&[(1.0, f(p, p)), (1.0, f(q, q)), (-2.0, f(p, q))])?
                        .value
                }
                None => {
                    let c = |a: &Point, b: &Point| {
                        e.integrate_region(&product::covariance_factors(a, b), band.lo, band.hi)
                            .map(|r| r.value)
                    };
                    c(p, p)? + c(q, q)? - 2.0 * c(p, q)?
                }
            }
        }
    };
    check_nonnegative(v, spec, "increment variance")
}

fn check_nonnegative(v: f64, spec: &QuadratureSpec, what: &str) -> Result<f64> {
    if v < -(spec.abs_tol * 10.0).max(1e-10) {
        return Err(Error::Consistency(format!("{what} is negative: {v}")));
    }
    Ok(v.max(0.0))
}

/// d(p, q)² = E|v(p) − v(q)|², from a single spectral integral where the
/// integrand permits it.
pub fn increment_variance(model: &FieldModel, p: &Point, q: &Point, spec: &QuadratureSpec) -> Result<f64> {
    band_increment_variance(model, Band::full(), p, q, spec)
}

/// d(p, q)² from Var p + Var q − 2 Cov(p, q).
pub fn increment_variance_three_term(
    model: &FieldModel,
    p: &Point,
    q: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let v = pair_covariance(model, p, p, spec)? + pair_covariance(model, q, q, spec)?
        - 2.0 * pair_covariance(model, p, q, spec)?;
    check_nonnegative(v, spec, "three-term increment variance")
}

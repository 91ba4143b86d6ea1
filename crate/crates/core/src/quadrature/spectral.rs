//! Generic integration of c_{H,d} ∬ F(τ, ξ) |τ|^{1−2H} |ξ|^{-β} dτ dξ.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::gk::{geometric_breaks, integrate, integrate_with_breaks, Quad, Tolerance};
use super::kernel::phi_h;
use super::tails::power_tail;
use super::{IntegralResult, QuadratureSpec, SingularityTransform};
use crate::error::{Error, Result};
use crate::models::{noise_constants, SpdeModel};
use crate::special::sphere_area;

/// An integrand of the spectral variables together with its tail model.
///
/// In the tails the integrand is assumed to behave like
/// `envelope / (τ² + |ξ|^{2α})`, with the envelope supplied separately for
/// large |τ| and large |ξ|.
pub trait SpectralIntegrand: Sync {
    fn eval(&self, tau: f64, xi: &[f64]) -> Complex<f64>;

    /// Mean numerator as |τ| → ∞ at fixed ξ.
    fn tau_envelope(&self, xi: &[f64]) -> f64;

    /// Mean numerator over directions as |ξ| → ∞ at fixed τ.
    fn xi_envelope(&self, tau: f64) -> f64;

    /// Mean numerator as |ξ| → ∞, averaged over τ as well.
    fn xi_envelope_mean(&self) -> f64;

    /// Leading power p of the τ-integrated radial integrand, r^p as r → 0
    /// (including the factor r^{d−1−β}). Defaults to d − 1 − β.
    fn origin_exponent(&self) -> Option<f64> {
        None
    }

    /// Largest oscillation frequency in τ, used to place panel breaks.
    fn tau_frequency(&self) -> f64 {
        1.0
    }

    /// True when the integrand depends on ξ only through |ξ|.
    fn is_radial(&self) -> bool {
        false
    }
}

/// Integration order of the two-level quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpectralOrder {
    /// Radial variable outside, τ inside; closed-form envelope tails.
    #[default]
    XiOuter,
    /// τ outside, radial variable inside; doubled cutoffs and numerically
    /// mapped envelope tails.
    TauOuter,
}

struct Ctx<'a> {
    f: &'a dyn SpectralIntegrand,
    d: usize,
    alpha: f64,
    beta: f64,
    hurst: f64,
    tol: Tolerance,
    power: bool,
}

impl Ctx<'_> {
    /// Sum over the sign of τ and over directions of ξ on the sphere of
    /// radius r (d = 1: ±r; d = 2: the circle, without the r Jacobian).
    fn fold(&self, tau: f64, r: f64) -> Result<f64> {
        let f = self.f;
        let pair = |xi: &[f64]| {
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            (f.eval(tau, xi) + f.eval(-tau, xi) + f.eval(tau, &neg) + f.eval(-tau, &neg)).re
        };
        match self.d {
            1 => Ok(pair(&[r])),
            _ => {
                if f.is_radial() {
                    return Ok(PI * pair(&[r, 0.0]));
                }
                let g = |phi: f64| pair(&[r * phi.cos(), r * phi.sin()]);
                let mut err = None;
                let q = integrate(
                    |phi| {
                        let v = g(phi);
                        if v.is_nan() {
                            err = Some(phi);
                        }
                        v
                    },
                    0.0,
                    PI,
                    self.tol.scaled(0.1),
                )?;
                if let Some(phi) = err {
                    return Err(Error::NanIntegrand(format!("angle {phi} at r = {r}")));
                }
                Ok(q.value)
            }
        }
    }

    fn fold_tau_envelope(&self, r: f64) -> Result<f64> {
        let f = self.f;
        match self.d {
            1 => Ok(f.tau_envelope(&[r]) + f.tau_envelope(&[-r])),
            _ => {
                if f.is_radial() {
                    return Ok(2.0 * PI * f.tau_envelope(&[r, 0.0]));
                }
                let q = integrate(
                    |phi| {
                        let (c, s) = (phi.cos(), phi.sin());
                        f.tau_envelope(&[r * c, r * s]) + f.tau_envelope(&[-r * c, -r * s])
                    },
                    0.0,
                    PI,
                    self.tol.scaled(0.1),
                )?;
                Ok(q.value)
            }
        }
    }

    fn radial_weight(&self, r: f64) -> f64 {
        if r == 0.0 {
            0.0
        } else {
            r.powf(self.d as f64 - 1.0 - self.beta)
        }
    }

    /// ∫_0^T dτ τ^{1−2H} fold(τ, r), with u = τ^{2−2H}/(2−2H) when enabled.
    fn tau_integral(&self, r: f64, t_max: f64) -> Result<Quad> {
        let a = r.powf(self.alpha);
        let e = 2.0 - 2.0 * self.hurst;
        let use_u = self.power && e != 1.0;
        let w = self.f.tau_frequency();
        let panels = ((t_max * w / (2.0 * PI)).ceil() as usize).clamp(1, 4000);
        let mut taus: Vec<f64> = (0..=panels).map(|i| t_max * i as f64 / panels as f64).collect();
        for x in [0.1 * a, a, 10.0 * a] {
            if x > 0.0 && x < taus[1] {
                taus.push(x);
            }
        }
        taus.sort_by(f64::total_cmp);
        let mut nan = None;
        let q = if use_u {
            let breaks: Vec<f64> = taus.iter().map(|x| x.powf(e) / e).collect();
            integrate_with_breaks(
                |u| {
                    let tau = (e * u).powf(1.0 / e);
                    let v = self.fold(tau, r).unwrap_or(f64::NAN);
                    if v.is_nan() {
                        nan = Some(tau);
                    }
                    v
                },
                &breaks,
                self.tol.scaled(0.1),
            )
        } else {
            let p = 1.0 - 2.0 * self.hurst;
            integrate_with_breaks(
                |tau| {
                    let v = self.fold(tau, r).unwrap_or(f64::NAN) * tau.powf(p);
                    if v.is_nan() {
                        nan = Some(tau);
                    }
                    v
                },
                &taus,
                self.tol.scaled(0.1),
            )
        };
        if let Some(tau) = nan {
            return Err(Error::NanIntegrand(format!("tau {tau} at r = {r}")));
        }
        q
    }

    /// ∫_0^X dr r^{d−1−β} g(r) using w = r^{p+1}/(p+1) near the origin.
    fn radial_integral<G: FnMut(f64) -> f64>(&self, mut g: G, x_max: f64, p: f64) -> Result<Quad> {
        let mut pts = vec![0.0];
        pts.extend(geometric_breaks(x_max * 2f64.powi(-12), x_max, 2.0));
        let q = p + 1.0;
        if !(q > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radial integrand is not integrable at the origin (power {p})"
            )));
        }
        if self.power {
            let breaks: Vec<f64> = pts.iter().map(|&r| r.powf(q) / q).collect();
            integrate_with_breaks(
                |w| {
                    let r = (q * w).powf(1.0 / q);
                    if r == 0.0 {
                        return 0.0;
                    }
                    self.radial_weight(r) * g(r) * r.powf(1.0 - q)
                },
                &breaks,
                self.tol,
            )
        } else {
            integrate_with_breaks(|r| self.radial_weight(r) * g(r), &pts, self.tol)
        }
    }
}

/// Evaluates `c_{H,d} ∬ F(τ, ξ) |τ|^{1−2H} |ξ|^{-β} dτ dξ` (real part).
pub fn weighted_spectral_integral(
    integrand: &dyn SpectralIntegrand,
    model: &SpdeModel,
    spec: &QuadratureSpec,
    order: SpectralOrder,
) -> Result<IntegralResult> {
    spec.validate()?;
    let nc = noise_constants(model.hurst, model.dim)?;
    let ctx = Ctx {
        f: integrand,
        d: model.dim,
        alpha: model.alpha,
        beta: model.beta,
        hurst: model.hurst,
        tol: spec.tolerance(),
        power: spec.singularity_transform == SingularityTransform::Power,
    };
    let d = model.dim as f64;
    let theta2 = model.theta2();
    if !(theta2 > 0.0) {
        return Err(Error::ExponentCondition(format!(
            "spectral integral diverges: theta2 = {theta2}"
        )));
    }
    let sd = sphere_area(model.dim);
    let h = model.hurst;
    let (q, note) = match order {
        SpectralOrder::XiOuter => {
            let x = spec.tail_cutoff;
            let t = x.powf(model.alpha);
            let p = integrand.origin_exponent().unwrap_or(d - 1.0 - model.beta);
            let mut failure = None;
            let mut inner_ok = true;
            let body = ctx.radial_integral(
                |r| match inner_xi_outer(&ctx, r, t, spec.tail_extrapolation) {
                    Ok(q) => {
                        inner_ok &= q.converged;
                        q.value
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                x,
                p,
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            let mut total = body;
            total.converged &= inner_ok;
            if spec.tail_extrapolation {
                let tail = integrand.xi_envelope_mean() * sd * PI / (PI * h).sin()
                    * x.powf(-2.0 * theta2)
                    / (2.0 * theta2);
                total.value += tail;
            }
            (
                total,
                format!(
                    "xi-outer; R = {x}, T = R^alpha = {t}; {}",
                    tail_note(spec.tail_extrapolation)
                ),
            )
        }
        SpectralOrder::TauOuter => {
            let x = 2.0 * spec.tail_cutoff;
            let t = x.powf(model.alpha);
            let e = 2.0 - 2.0 * h;
            let use_u = ctx.power && e != 1.0;
            let w = integrand.tau_frequency();
            let panels = ((t * w / (2.0 * PI)).ceil() as usize).clamp(1, 8000);
            let taus: Vec<f64> = (0..=panels).map(|i| t * i as f64 / panels as f64).collect();
            let kappa_r = 2.0 * model.alpha - d + model.beta;
            let mut failure = None;
            let mut per_tau = |tau: f64| -> f64 {
                let res = (|| -> Result<f64> {
                    let body = ctx.radial_integral(
                        |r| ctx.fold(tau, r).unwrap_or(f64::NAN),
                        x,
                        d - 1.0 - model.beta,
                    )?;
                    let mut v = body.value;
                    if spec.tail_extrapolation {
                        let env = integrand.xi_envelope(tau) + integrand.xi_envelope(-tau);
                        if env != 0.0 {
                            let a2 = model.alpha * 2.0;
                            let tail = power_tail(
                                |r: f64| r.powf(d - 1.0 - model.beta) / (tau * tau + r.powf(a2)),
                                x,
                                kappa_r,
                                ctx.tol.scaled(0.1),
                            )?;
                            v += env * sd * tail.value;
                        }
                    }
                    Ok(v)
                })();
                match res {
                    Ok(v) if v.is_nan() => {
                        failure.get_or_insert(Error::NanIntegrand(format!("tau = {tau}")));
                        0.0
                    }
                    Ok(v) => v,
                    Err(err) => {
                        failure.get_or_insert(err);
                        0.0
                    }
                }
            };
            let body = if use_u {
                let breaks: Vec<f64> = taus.iter().map(|s| s.powf(e) / e).collect();
                integrate_with_breaks(|u| per_tau((e * u).powf(1.0 / e)), &breaks, ctx.tol)?
            } else {
                let p = 1.0 - 2.0 * h;
                integrate_with_breaks(|s| per_tau(s) * s.powf(p), &taus, ctx.tol)?
            };
            if let Some(err) = failure {
                return Err(err);
            }
            let mut total = body;
            if spec.tail_extrapolation {
                let tail = tau_tail_numeric(&ctx, t)?;
                total = total.combine(tail);
            }
            (
                total,
                format!(
                    "tau-outer; R = {x}, T = R^alpha = {t}; {}",
                    tail_note(spec.tail_extrapolation)
                ),
            )
        }
    };
    Ok(IntegralResult::from_quad(q.scale(nc.c_hd), note))
}

fn tail_note(on: bool) -> &'static str {
    if on {
        "envelope tails added"
    } else {
        "plain truncation"
    }
}

fn inner_xi_outer(ctx: &Ctx, r: f64, t: f64, tails: bool) -> Result<Quad> {
    let mut q = ctx.tau_integral(r, t)?;
    if tails {
        let a = r.powf(ctx.alpha);
        let env = ctx.fold_tau_envelope(r)?;
        if env != 0.0 {
            let tail = if a > 0.0 {
                2.0 * a.powf(-2.0 * ctx.hurst) * phi_h(ctx.hurst, t / a)
            } else {
                2.0 * t.powf(-2.0 * ctx.hurst) / (2.0 * ctx.hurst)
            };
            q.value += env * tail;
        }
    }
    Ok(q)
}

/// ∫_{τ > T} 2 τ^{1−2H} ∫_0^∞ r^{d−1−β} env(r)/(τ² + r^{2α}) dr dτ, all by
/// adaptive quadrature on mapped variables.
fn tau_tail_numeric(ctx: &Ctx, t: f64) -> Result<Quad> {
    let d = ctx.d as f64;
    let kappa_r = 2.0 * ctx.alpha - d + ctx.beta;
    let theta1 = ctx.hurst - (d - ctx.beta) / (2.0 * ctx.alpha);
    let mut failure = None;
    let p = 1.0 - 2.0 * ctx.hurst;
    let outer = power_tail(
        |tau: f64| {
            let res = (|| -> Result<f64> {
                let knee = tau.powf(1.0 / ctx.alpha);
                let g = |r: f64| {
                    ctx.fold_tau_envelope(r).unwrap_or(f64::NAN)
                        / (tau * tau + r.powf(2.0 * ctx.alpha))
                };
                let near = ctx.radial_integral(g, knee, d - 1.0 - ctx.beta)?;
                let far = power_tail(
                    |r: f64| ctx.radial_weight(r) * g(r),
                    knee,
                    kappa_r,
                    ctx.tol.scaled(0.1),
                )?;
                Ok(2.0 * tau.powf(p) * (near.value + far.value))
            })();
            match res {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        t,
        2.0 * theta1,
        ctx.tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(outer)
}

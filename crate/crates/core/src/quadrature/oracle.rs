//! Transition densities and the time/space-domain inner product used as an
//! independent check on the spectral covariances.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma, ln_gamma};

use super::gk::{integrate, integrate_with_breaks, Tolerance};
use super::tails::power_tail;
use super::QuadratureSpec;
use crate::error::{Error, Result};
use crate::models::{noise_constants, Point, SpdeModel};
use crate::special::bessel_j0;

/// Riesz kernel constant C with (2π)^{-d} ∫ e^{iξ·x} |ξ|^{-β} dξ = C |x|^{β−d}.
pub fn riesz_constant(d: usize, beta: f64) -> f64 {
    let d = d as f64;
    (2.0 * PI).powf(-d) * PI.powf(d / 2.0) * 2f64.powf(d - beta) * gamma((d - beta) / 2.0)
        / gamma(beta / 2.0)
}

/// Density at time t and position x of the α-stable process with symbol |ξ|^α.
pub fn transition_density(model: &SpdeModel, t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: x.len(),
        });
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok(radial_density(model.alpha, model.dim, t, r2.sqrt()))
}

fn radial_density(alpha: f64, d: usize, t: f64, r: f64) -> f64 {
    let df = d as f64;
    if alpha == 2.0 {
        return (4.0 * PI * t).powf(-df / 2.0) * (-r * r / (4.0 * t)).exp();
    }
    let s = t.powf(-1.0 / alpha);
    s.powf(df) * unit_profile(alpha, d, r * s)
}

/// Density of the standard α-stable law at radius y.
fn unit_profile(alpha: f64, d: usize, y: f64) -> f64 {
    if let Some(v) = asymptotic_profile(alpha, d, y) {
        return v;
    }
    let cutoff = 40f64.powf(1.0 / alpha);
    let tol = Tolerance::new(1e-15, 1e-11, 400_000);
    let panels = ((cutoff * y / PI).ceil() as usize).clamp(1, 2000);
    let breaks: Vec<f64> = (0..=panels).map(|i| cutoff * i as f64 / panels as f64).collect();
    let v = match d {
        1 => integrate_with_breaks(|k| (k * y).cos() * (-k.powf(alpha)).exp(), &breaks, tol)
            .map(|q| q.value / PI),
        _ => integrate_with_breaks(
            |k| k * bessel_j0(k * y) * (-k.powf(alpha)).exp(),
            &breaks,
            tol,
        )
        .map(|q| q.value / (2.0 * PI)),
    };
    v.unwrap_or(f64::NAN).max(0.0)
}

/// Large-radius expansion Σ_k (−1)^{k+1}/k! 2^{αk} π^{-d/2-1}
/// Γ(αk/2+1) Γ((αk+d)/2) sin(παk/2) y^{−αk−d}, used when it has converged.
fn asymptotic_profile(alpha: f64, d: usize, y: f64) -> Option<f64> {
    if y < 4.0 {
        return None;
    }
    let df = d as f64;
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let ak = alpha * kf;
        let ln_mag = ak * 2f64.ln() + ln_gamma(ak / 2.0 + 1.0) + ln_gamma((ak + df) / 2.0)
            - ln_gamma(kf + 1.0)
            - (ak + df) * y.ln()
            - (df / 2.0 + 1.0) * PI.ln();
        let mag = ln_mag.exp();
        if mag > last {
            return None;
        }
        let term = if k % 2 == 1 { mag } else { -mag } * (PI * ak / 2.0).sin();
        sum += term;
        last = mag;
        if mag < 1e-15 * sum.abs() {
            return Some(sum);
        }
    }
    None
}

struct Conv {
    alpha: f64,
    beta: f64,
    d: usize,
    riesz: f64,
    tol: Tolerance,
}

impl Conv {
    /// F(c) = ∫ f(w) p_c(z − w) dw with f = C|w|^{β−d}, |z| = z.
    fn eval(&self, c: f64, z: f64) -> Result<f64> {
        let beta = self.beta;
        let width = if self.alpha == 2.0 {
            (2.0 * c).sqrt()
        } else {
            c.powf(1.0 / self.alpha)
        };
        // v = w^β/β absorbs w^{β−1}
        let to_v = |w: f64| w.powf(beta) / beta;
        let from_v = |v: f64| (beta * v).powf(1.0 / beta);
        let mut ws = vec![0.0];
        for k in [-6.0, -2.0, 0.0, 2.0, 6.0] {
            let w = z + k * width;
            if w > 0.0 {
                ws.push(w);
            }
        }
        let far = z + 40.0 * width;
        ws.push(far);
        ws.sort_by(f64::total_cmp);
        ws.dedup();
        let radial = |w: f64| -> f64 {
            match self.d {
                1 => radial_density(self.alpha, 1, c, (z - w).abs()) + radial_density(self.alpha, 1, c, z + w),
                _ => {
                    // angular mean over the circle of radius w around the origin
                    let g = |phi: f64| {
                        let r2 = z * z + w * w - 2.0 * z * w * phi.cos();
                        radial_density(self.alpha, 2, c, r2.max(0.0).sqrt())
                    };
                    integrate(g, 0.0, PI, self.tol.scaled(0.1))
                        .map(|q| 2.0 * q.value)
                        .unwrap_or(f64::NAN)
                }
            }
        };
        let breaks: Vec<f64> = ws.iter().map(|&w| to_v(w)).collect();
        let near = integrate_with_breaks(|v| radial(from_v(v)), &breaks, self.tol)?;
        let kappa = self.alpha + 1.0 - beta;
        let tail = power_tail(
            |w: f64| w.powf(beta - 1.0) * radial(w),
            far,
            if self.alpha == 2.0 { 4.0 } else { kappa.max(0.5) },
            self.tol,
        )?;
        if !near.converged {
            return Err(Error::Quadrature(format!(
                "spatial convolution did not converge at c = {c}, |z| = {z}"
            )));
        }
        Ok(self.riesz * (near.value + tail.value))
    }

    /// ∫_{lo}^{hi} F(c) dc with c = v^m absorbing the c^{-(d−β)/α} blow-up.
    fn integral(&self, lo: f64, hi: f64, z: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        let e = (self.d as f64 - self.beta) / self.alpha;
        let m = 1.0 / (1.0 - e);
        let (vlo, vhi) = (lo.powf(1.0 / m), hi.powf(1.0 / m));
        let mut fail = None;
        let q = integrate(
            |v| {
                let c = v.powf(m);
                if c <= 0.0 {
                    return 0.0;
                }
                match self.eval(c, z) {
                    Ok(val) => val * m * v.powf(m - 1.0),
                    Err(err) => {
                        fail.get_or_insert(err);
                        0.0
                    }
                }
            },
            vlo,
            vhi,
            self.tol,
        )?;
        if let Some(err) = fail {
            return Err(err);
        }
        if !q.converged {
            return Err(Error::Quadrature(format!(
                "time integral of the convolution did not converge on [{lo}, {hi}]"
            )));
        }
        Ok(q.value)
    }
}

/// ⟨G_p, G_q⟩ evaluated in the time/space domain.
pub fn time_domain_inner_product(
    model: &SpdeModel,
    p: &Point,
    q: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    for x in [p, q] {
        if x.dim() != model.dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: model.dim + 1,
                got: x.dim(),
            });
        }
        if !(x.time() > 0.0) {
            return Err(Error::InvalidArgument("time coordinates must be positive".into()));
        }
    }
    let (t, t2) = (p.time(), q.time());
    let z: f64 = p
        .space()
        .iter()
        .zip(q.space())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let conv = Conv {
        alpha: model.alpha,
        beta: model.beta,
        d: model.dim,
        riesz: riesz_constant(model.dim, model.beta),
        tol: Tolerance::new(spec.abs_tol, spec.rel_tol * 0.1, spec.max_evals),
    };
    let h = model.hurst;
    if h == 0.5 {
        return Ok(0.5 * conv.integral((t - t2).abs(), t + t2, z)?);
    }
    let nc = noise_constants(h, model.dim)?;
    let e = 2.0 * h - 1.0;
    let mut fail = None;
    let body = |sigma: f64| -> f64 {
        let lo = (t - t2 - sigma).abs();
        let hi = t + t2 - sigma.abs();
        match conv.integral(lo, hi, z) {
            Ok(v) => v,
            Err(err) => {
                fail.get_or_insert(err);
                0.0
            }
        }
    };
    // |σ|^{2H−2} dσ = dw with w = |σ|^{2H−1}/(2H−1), on each side of 0.
    let side = |len: f64, sign: f64, body: &mut dyn FnMut(f64) -> f64| -> Result<f64> {
        let kink = sign * (t - t2);
        let mut pts = vec![0.0, len.powf(e) / e];
        if kink > 0.0 && kink < len {
            pts.insert(1, kink.powf(e) / e);
        }
        let outer_tol = Tolerance::new(spec.abs_tol, spec.rel_tol * 0.3, spec.max_evals);
        integrate_with_breaks(|w| body(sign * (e * w).powf(1.0 / e)), &pts, outer_tol).map(|q| q.value)
    };
    let mut b = body;
    let right = side(t, 1.0, &mut b)?;
    let left = side(t2, -1.0, &mut b)?;
    if let Some(err) = fail {
        return Err(err);
    }
    Ok(0.5 * nc.a_h * (right + left))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_kernel_at_origin() {
        let m = SpdeModel::default();
        let v = transition_density(&m, 1.0, &[0.0]).unwrap();
        assert!((v - (4.0 * PI).powf(-0.5)).abs() < 1e-15);
        assert!(transition_density(&m, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn cauchy_density() {
        let m = SpdeModel::new(1.0, 0.1, 0.5, 1);
        for &x in &[0.0, 0.5, 3.0, 10.0] {
            let v = transition_density(&m, 1.0, &[x]).unwrap();
            let exact = 1.0 / (PI * (1.0 + x * x));
            assert!((v - exact).abs() < 1e-9 * exact.max(1e-3), "x={x}: {v} vs {exact}");
        }
        // two-dimensional Cauchy: (1/2π)(1 + r²)^{-3/2}
        let m2 = SpdeModel::new(1.0, 0.5, 0.5, 2);
        for &r in &[0.0, 1.0, 6.0] {
            let v = transition_density(&m2, 1.0, &[r, 0.0]).unwrap();
            let exact = (1.0 + r * r).powf(-1.5) / (2.0 * PI);
            assert!((v - exact).abs() < 1e-9 * exact.max(1e-3), "r={r}: {v} vs {exact}");
        }
    }

    #[test]
    fn densities_are_normalized() {
        for &alpha in &[0.7, 1.0, 1.5, 2.0] {
            let m = SpdeModel::new(alpha, 0.5, 0.9, 1);
            let l = 60.0;
            let q = integrate_with_breaks(
                |x| transition_density(&m, 1.0, &[x]).unwrap(),
                &[-l, -4.0, -1.0, 0.0, 1.0, 4.0, l],
                Tolerance::new(1e-13, 1e-10, 400_000),
            )
            .unwrap();
            // tail series Σ c_k y^{-1-αk} integrated over |y| > L
            let tail: f64 = if alpha < 2.0 {
                (1..8)
                    .map(|k| {
                        let ak = alpha * k as f64;
                        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                        let ck = sign * gamma(ak + 1.0) * (PI * ak / 2.0).sin()
                            / (PI * gamma(k as f64 + 1.0));
                        2.0 * ck * l.powf(-ak) / ak
                    })
                    .sum()
            } else {
                0.0
            };
            assert!((q.value + tail - 1.0).abs() < 1e-5, "alpha={alpha}: {}", q.value + tail);
        }
    }

    #[test]
    fn riesz_pair_in_one_dimension() {
        // (1/π) ∫_0^∞ cos(ξ) ξ^{-1/2} dξ = 1/√(2π)
        assert!((riesz_constant(1, 0.5) - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn oracle_vanishes_as_time_shrinks() {
        let m = SpdeModel::default();
        let spec = QuadratureSpec::default();
        let big = time_domain_inner_product(&m, &Point::new(vec![1.0, 0.0]), &Point::new(vec![1.0, 0.0]), &spec)
            .unwrap();
        let small = time_domain_inner_product(&m, &Point::new(vec![1e-4, 0.0]), &Point::new(vec![1e-4, 0.0]), &spec)
            .unwrap();
        assert!(big > 0.0 && small > 0.0 && small < 1e-2 * big);
    }
}

//! Semi-infinite integrals: algebraic tails and oscillatory tails.

use super::gk::{integrate, Quad, Tolerance};
use crate::error::{Error, Result};
use crate::special::bessel_j0_zero;

/// `∫_a^∞ f(x) dx` for an integrand decaying like `x^{-1-kappa}`.
///
/// Uses `x = a v^{-1/kappa}`, under which a pure power tail becomes constant.
pub fn power_tail<F: FnMut(f64) -> f64>(mut f: F, a: f64, kappa: f64, tol: Tolerance) -> Result<Quad> {
    if !(a > 0.0) || !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power tail needs a > 0 and kappa > 0 (a = {a}, kappa = {kappa})"
        )));
    }
    let p = -1.0 / kappa;
    let g = move |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let x = a * v.powf(p);
        if !x.is_finite() {
            return 0.0;
        }
        let jac = a / kappa * v.powf(p - 1.0);
        let y = f(x) * jac;
        if y.is_finite() {
            y
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// Oscillating weight in an oscillatory tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oscillator {
    /// `cos(ω x)`
    Cos,
    /// `J0(ω x)`
    J0,
}

impl Oscillator {
    pub fn weight(self, t: f64) -> f64 {
        match self {
            Oscillator::Cos => t.cos(),
            Oscillator::J0 => crate::special::bessel_j0(t),
        }
    }

    /// The first zero of the weight strictly above `t` (in the scaled variable).
    fn zeros_above(self, t: f64, count: usize) -> Vec<f64> {
        match self {
            Oscillator::Cos => {
                let half = std::f64::consts::FRAC_PI_2;
                let pi = std::f64::consts::PI;
                let mut k = ((t - half) / pi).floor() + 1.0;
                if half + k * pi <= t {
                    k += 1.0;
                }
                (0..count).map(|i| half + (k + i as f64) * pi).collect()
            }
            Oscillator::J0 => {
                let mut k = ((t / std::f64::consts::PI) - 0.25).floor().max(1.0) as usize;
                while k > 1 && bessel_j0_zero(k - 1) > t {
                    k -= 1;
                }
                while bessel_j0_zero(k) <= t {
                    k += 1;
                }
                (0..count).map(|i| bessel_j0_zero(k + i)).collect()
            }
        }
    }
}

/// Wynn epsilon acceleration of a sequence of partial sums.
///
/// Returns the accelerated limit and a crude error estimate.
pub fn wynn_epsilon(sums: &[f64]) -> (f64, f64) {
    let n = sums.len();
    if n == 0 {
        return (0.0, f64::INFINITY);
    }
    if n < 3 {
        let last = sums[n - 1];
        let err = if n == 2 { (sums[1] - sums[0]).abs() } else { last.abs() };
        return (last, err);
    }
    // e[k] holds the current column of the epsilon table.
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = sums.to_vec();
    let mut best = sums[n - 1];
    let mut best_err = (sums[n - 1] - sums[n - 2]).abs();
    let mut col = 0usize;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            let base = if col == 0 { 0.0 } else { prev[i + 1] };
            let v = if diff == 0.0 {
                f64::INFINITY
            } else {
                base + 1.0 / diff
            };
            next.push(v);
        }
        col += 1;
        if col % 2 == 0 && next.len() >= 2 {
            let m = next.len();
            let a = next[m - 1];
            let b = next[m - 2];
            if a.is_finite() && b.is_finite() {
                let e = (a - b).abs();
                if e < best_err {
                    best = a;
                    best_err = e;
                }
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        prev = cur;
        cur = next;
    }
    (best, best_err)
}

/// `∫_a^∞ g(x) w(ω x) dx` for a slowly varying amplitude `g`.
///
/// Integrates panel by panel between consecutive zeros of the weight and
/// accelerates the partial sums with Wynn's epsilon algorithm.
pub fn oscillatory_tail<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    omega: f64,
    kind: Oscillator,
    tol: Tolerance,
) -> Result<Quad> {
    if !(omega > 0.0) || !(a >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "oscillatory tail needs omega > 0 and a >= 0 (omega = {omega}, a = {a})"
        )));
    }
    const PANELS: usize = 40;
    let zeros = kind.zeros_above(a * omega, PANELS);
    let mut pts = Vec::with_capacity(PANELS + 1);
    pts.push(a);
    pts.extend(zeros.iter().map(|z| z / omega));
    let panel_tol = tol.scaled(0.1);
    let mut f = move |x: f64| f(x) * kind.weight(omega * x);
    let mut running = 0.0;
    let mut sums = Vec::with_capacity(PANELS);
    let mut total = Quad::ZERO;
    let mut last = (f64::NAN, f64::INFINITY);
    for (i, w) in pts.windows(2).enumerate() {
        let q = integrate(&mut f, w[0], w[1], panel_tol.with_abs(panel_tol.abs / 4.0))?;
        running += q.value;
        total = total.combine(Quad { value: 0.0, ..q });
        // Skip the partial first panel when feeding the accelerator.
        sums.push(running);
        if i >= 8 && i % 2 == 0 {
            let est = wynn_epsilon(&sums[1..]);
            if est.1 <= tol.abs.max(tol.rel * est.0.abs()) {
                let err = est.1 + total.error;
                return Ok(Quad {
                    value: est.0,
                    error: err,
                    evals: total.evals,
                    converged: true,
                });
            }
            last = est;
        }
    }
    let est = wynn_epsilon(&sums[1..]);
    let best = if est.1 < last.1 { est } else { last };
    Ok(Quad {
        value: best.0,
        error: best.1 + total.error,
        evals: total.evals,
        converged: best.1 <= 10.0 * tol.abs.max(tol.rel * best.0.abs()),
    })
}

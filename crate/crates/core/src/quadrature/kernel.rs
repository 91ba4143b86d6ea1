//! Frequency-by-frequency time integrals of the heat-kernel transforms.
//!
//! For a spatial frequency with A = |ξ|^α the time transform of
//! s ↦ 1_{[0,t]}(s) e^{-A(t-s)} is ĝ_t(τ) = (e^{-iτt} − e^{-tA})/(A − iτ).
//! This module integrates products of such transforms against |τ|^{1−2H}
//! over the whole line or over |τ| in a range.

use std::f64::consts::PI;

use super::gk::{integrate, integrate_with_breaks, Quad, Tolerance};
use super::tails::{oscillatory_tail, Oscillator};
use crate::error::Result;
use crate::special::one_minus_cos_moment;
use statrs::function::gamma::{gamma, gamma_ur};

/// Which product of time transforms is integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimePair {
    /// Re ĝ_t · conj ĝ_{t2}
    Cross { t: f64, t2: f64 },
    /// |ĝ_t − ĝ_s|²
    Diff { t: f64, s: f64 },
    /// |ĝ_∞|², the kernel started at −∞.
    StationaryVar,
    /// |ĝ_∞ (e^{-iτh} − 1)|², a time step of the kernel started at −∞.
    StationaryStep { h: f64 },
}

/// e^{−ta} − e^{−sa} without overflow for large a.
fn exp_gap(t: f64, s: f64, a: f64) -> f64 {
    if t >= s {
        (-s * a).exp() * (-(t - s) * a).exp_m1()
    } else {
        -(-t * a).exp() * (-(s - t) * a).exp_m1()
    }
}

impl TimePair {
    /// Real numerator, i.e. the integrand times (τ² + A²).
    pub fn numerator(self, a: f64, tau: f64) -> f64 {
        match self {
            TimePair::Cross { t, t2 } => {
                let et = (-t * a).exp();
                let et2 = (-t2 * a).exp();
                (tau * (t - t2)).cos() - et2 * (tau * t).cos() - et * (tau * t2).cos() + et * et2
            }
            TimePair::Diff { t, s } => {
                let delta = exp_gap(t, s, a);
                let sh = (0.5 * tau * (t - s)).sin();
                let m = 0.5 * tau * (t + s);
                let re = -2.0 * m.sin() * sh - delta;
                let im = 2.0 * m.cos() * sh;
                re * re + im * im
            }
            TimePair::StationaryVar => 1.0,
            TimePair::StationaryStep { h } => 4.0 * (0.5 * tau * h).sin().powi(2),
        }
    }

    /// Numerator as Σ c_k cos(ω_k τ) with ω_k ≥ 0.
    pub fn cos_terms(self, a: f64) -> [(f64, f64); 4] {
        match self {
            TimePair::Cross { t, t2 } => {
                let et = (-t * a).exp();
                let et2 = (-t2 * a).exp();
                [
                    (1.0, (t - t2).abs()),
                    (-et2, t),
                    (-et, t2),
                    (et * et2, 0.0),
                ]
            }
            TimePair::Diff { t, s } => {
                let delta = exp_gap(t, s, a);
                [
                    (2.0 + delta * delta, 0.0),
                    (-2.0, (t - s).abs()),
                    (-2.0 * delta, t),
                    (2.0 * delta, s),
                ]
            }
            TimePair::StationaryVar => [(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)],
            TimePair::StationaryStep { h } => [(2.0, 0.0), (-2.0, h.abs()), (0.0, 0.0), (0.0, 0.0)],
        }
    }

    fn max_frequency(self) -> f64 {
        match self {
            TimePair::Cross { t, t2 } => t.max(t2),
            TimePair::Diff { t, s } => t.max(s),
            TimePair::StationaryVar => 0.0,
            TimePair::StationaryStep { h } => h.abs(),
        }
    }
}

/// ∫_y^∞ s^{1−2H}/(1 + s²) ds.
pub fn phi_h(hurst: f64, y: f64) -> f64 {
    if hurst == 0.5 {
        return PI / 2.0 - y.atan();
    }
    let p = 2.0 * hurst;
    if y >= 2.0 {
        let y2 = y * y;
        let mut term = y.powf(-p);
        let mut sum = 0.0;
        for k in 0..200 {
            let c = term / (p + 2.0 * k as f64);
            sum += if k % 2 == 0 { c } else { -c };
            if c < 1e-18 * sum.abs() {
                break;
            }
            term /= y2;
        }
        return sum;
    }
    let full = PI / (2.0 * (PI * hurst).sin());
    if y <= 0.0 {
        return full;
    }
    // ∫_0^y via u = s^{2−2H}/(2−2H)
    let e = 2.0 - p;
    let g = |u: f64| {
        let s = (e * u).powf(1.0 / e);
        1.0 / (1.0 + s * s)
    };
    let q = integrate(g, 0.0, y.powf(e) / e, Tolerance::new(1e-16, 1e-14, 100_000))
        .map(|q| q.value)
        .unwrap_or(f64::NAN);
    full - q
}

/// Time integrals against |τ|^{1−2H} for one Hurst index.
#[derive(Debug, Clone, Copy)]
pub struct TauKernel {
    pub hurst: f64,
    /// a_H / b_H, the Fourier constant of |τ|^{1−2H}.
    fourier_const: f64,
}

/// Oscillation periods beyond which a finite τ range is no longer
/// integrated panel by panel.
const MAX_PERIODS: f64 = 2000.0;

impl TauKernel {
    pub fn new(hurst: f64) -> Self {
        let fourier_const = if hurst == 0.5 {
            2.0 * PI
        } else {
            2f64.powf(2.0 * (1.0 - hurst)) * PI.sqrt() * gamma(1.0 - hurst)
                / gamma(hurst - 0.5)
        };
        Self {
            hurst,
            fourier_const,
        }
    }

    /// ∫_ℝ |τ|^{1−2H} · numerator/(τ² + A²) dτ.
    pub fn full(&self, pair: TimePair, a: f64, tol: Tolerance) -> Result<Quad> {
        if self.hurst == 0.5 {
            return Ok(Quad {
                value: full_half(pair, a),
                ..Quad::ZERO
            });
        }
        if pair == TimePair::StationaryVar {
            return Ok(Quad {
                value: stationary_var(self.hurst, a),
                ..Quad::ZERO
            });
        }
        self.sigma_form(pair, a, tol)
    }

    /// ∫_{|τ| < hi}, by direct quadrature.
    pub fn head(&self, pair: TimePair, a: f64, hi: f64, tol: Tolerance) -> Result<Quad> {
        if hi <= 0.0 {
            return Ok(Quad::ZERO);
        }
        let e = 2.0 - 2.0 * self.hurst;
        let to_u = |tau: f64| if e == 1.0 { tau } else { tau.powf(e) / e };
        let from_u = |u: f64| if e == 1.0 { u } else { (e * u).powf(1.0 / e) };
        let mut taus = Vec::new();
        let w = pair.max_frequency();
        let panel = if w > 0.0 { 2.0 * PI / w } else { hi };
        let n_panels = (hi / panel).ceil().min(4000.0) as usize;
        let step = hi / n_panels.max(1) as f64;
        taus.push(0.0);
        for &x in &[a * 0.1, a, a * 10.0] {
            if x > 0.0 && x < step {
                taus.push(x);
            }
        }
        for i in 1..n_panels {
            taus.push(i as f64 * step);
        }
        taus.push(hi);
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let breaks: Vec<f64> = taus.iter().map(|&x| to_u(x)).collect();
        let f = |u: f64| {
            let tau = from_u(u);
            pair.numerator(a, tau) / (tau * tau + a * a)
        };
        let q = integrate_with_breaks(f, &breaks, tol)?;
        Ok(q.scale(2.0))
    }

    /// ∫_{|τ| ≥ lo}.
    pub fn tail(&self, pair: TimePair, a: f64, lo: f64, tol: Tolerance) -> Result<Quad> {
        if lo <= 0.0 {
            return self.full(pair, a, tol);
        }
        if lo.is_infinite() {
            return Ok(Quad::ZERO);
        }
        let w = pair.max_frequency();
        if lo * w <= 2.0 * PI * MAX_PERIODS {
            let full = self.full(pair, a, tol)?;
            let head = self.head(pair, a, lo, tol)?;
            return Ok(Quad {
                value: full.value - head.value,
                error: full.error + head.error,
                evals: full.evals + head.evals,
                converged: full.converged && head.converged,
            });
        }
        self.tail_by_terms(pair, a, lo, tol)
    }

    /// ∫_{lo ≤ |τ| < hi}.
    pub fn range(&self, pair: TimePair, a: f64, lo: f64, hi: f64, tol: Tolerance) -> Result<Quad> {
        if hi <= lo {
            return Ok(Quad::ZERO);
        }
        if lo <= 0.0 {
            if hi.is_infinite() {
                return self.full(pair, a, tol);
            }
            let w = pair.max_frequency();
            if hi * w <= 2.0 * PI * MAX_PERIODS {
                return self.head(pair, a, hi, tol);
            }
            let full = self.full(pair, a, tol)?;
            let tail = self.tail_by_terms(pair, a, hi, tol)?;
            return Ok(Quad {
                value: full.value - tail.value,
                ..full.combine(tail)
            });
        }
        let upper = self.tail(pair, a, lo, tol)?;
        let beyond = self.tail(pair, a, hi, tol)?;
        Ok(Quad {
            value: upper.value - beyond.value,
            ..upper.combine(beyond)
        })
    }

    fn tail_by_terms(&self, pair: TimePair, a: f64, lo: f64, tol: Tolerance) -> Result<Quad> {
        let p = 1.0 - 2.0 * self.hurst;
        let mut total = Quad::ZERO;
        for (c, w) in pair.cos_terms(a) {
            if c == 0.0 {
                continue;
            }
            if w == 0.0 {
                let v = if a > 0.0 {
                    a.powf(-2.0 * self.hurst) * phi_h(self.hurst, lo / a)
                } else {
                    lo.powf(-2.0 * self.hurst) / (2.0 * self.hurst)
                };
                total = total.combine(Quad {
                    value: c * v,
                    ..Quad::ZERO
                });
            } else {
                let amp = |tau: f64| tau.powf(p) / (tau * tau + a * a);
                let q = oscillatory_tail(amp, lo, w, Oscillator::Cos, tol)?;
                total = total.combine(q.scale(c));
            }
        }
        Ok(total.scale(2.0))
    }

    /// Time-domain form: (a_H/b_H) ∫ |σ|^{2H−2} W(σ) dσ, with W the
    /// correlation of the two kernels at lag σ.
    fn sigma_form(&self, pair: TimePair, a: f64, tol: Tolerance) -> Result<Quad> {
        let q = match pair {
            TimePair::Cross { t, t2 } => {
                self.sigma_integral(|s| lag_corr(a, t, t2, s), t, t2, &[t - t2], a, tol)?
            }
            TimePair::Diff { t, s } => {
                let f = |sig: f64| {
                    lag_corr(a, t, t, sig) + lag_corr(a, s, s, sig)
                        - lag_corr(a, t, s, sig)
                        - lag_corr(a, s, t, sig)
                };
                let hi = t.max(s);
                let h = (t - s).abs();
                let mut r = self.sigma_integral(f, hi, hi, &[h, -h, t.min(s), -t.min(s)], a, tol)?;
                r.value = r.value.max(0.0);
                r
            }
            TimePair::StationaryVar => Quad {
                value: stationary_var(self.hurst, a) / self.fourier_const,
                ..Quad::ZERO
            },
            TimePair::StationaryStep { h } => {
                let h = h.abs();
                if a == 0.0 {
                    let v = 4.0 * h.powf(2.0 * self.hurst) * one_minus_cos_moment(2.0 * self.hurst);
                    return Ok(Quad {
                        value: v,
                        ..Quad::ZERO
                    });
                }
                // Lag correlation 2R(σ) − R(σ−h) − R(σ+h), R(σ) = e^{−A|σ|}/(2A):
                // quadrature on [0, h], incomplete gamma beyond.
                let f = |sig: f64| {
                    let d = if 2.0 * sig <= h {
                        -(-a * sig).exp() * (-a * (h - 2.0 * sig)).exp_m1()
                    } else {
                        (-a * (h - sig)).exp() * (-a * (2.0 * sig - h)).exp_m1()
                    };
                    (d - (-a * sig).exp() * (-a * h).exp_m1()) / (2.0 * a)
                };
                let head = self.sigma_integral(f, h, 0.0, &[0.5 * h], a, tol)?;
                let g = 2.0 * self.hurst - 1.0;
                let beyond = -2.0 / a * a.powf(-g) * sinh2_upper_gamma(g, a * h);
                let mut r = Quad {
                    value: 2.0 * (head.value + beyond),
                    error: 2.0 * head.error,
                    ..head
                };
                r.value = r.value.max(0.0);
                r
            }
        };
        Ok(q.scale(self.fourier_const))
    }

    /// ∫_{-t2}^{t} |σ|^{2H−2} f(σ) dσ with the singularity at 0 absorbed.
    fn sigma_integral<F: Fn(f64) -> f64>(
        &self,
        f: F,
        t: f64,
        t2: f64,
        kinks: &[f64],
        a: f64,
        tol: Tolerance,
    ) -> Result<Quad> {
        let e = 2.0 * self.hurst - 1.0;
        let to_w = |s: f64| s.powf(e) / e;
        let from_w = |w: f64| (e * w).powf(1.0 / e);
        let scale = if a > 0.0 { 1.0 / a } else { f64::INFINITY };
        let side = |len: f64, sign: f64| -> Result<Quad> {
            let mut pts = vec![0.0];
            let candidates = [0.1 * scale, scale, 10.0 * scale];
            for x in candidates.into_iter().chain(kinks.iter().map(|k| sign * k)) {
                if x > 0.0 && x < len {
                    pts.push(x);
                }
            }
            pts.push(len);
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let breaks: Vec<f64> = pts.iter().map(|&x| to_w(x)).collect();
            integrate_with_breaks(|w| f(sign * from_w(w)), &breaks, tol)
        };
        let right = side(t, 1.0)?;
        let left = side(t2, -1.0)?;
        Ok(right.combine(left))
    }
}

/// ∫ g_t(r + σ) g_{t2}(r) dr with g_t(s) = 1_{[0,t]}(s) e^{-A(t-s)}.
fn lag_corr(a: f64, t: f64, t2: f64, sigma: f64) -> f64 {
    let lo = (-sigma).max(0.0);
    let hi = t2.min(t - sigma);
    if hi <= lo {
        return 0.0;
    }
    if a == 0.0 {
        return hi - lo;
    }
    (-a * (t + t2 - sigma - 2.0 * hi)).exp() * (-(-2.0 * a * (hi - lo)).exp_m1()) / (2.0 * a)
}

/// sinh²(x/2) Γ(g, x), asymptotically for large x to avoid overflow.
fn sinh2_upper_gamma(g: f64, x: f64) -> f64 {
    if x <= 50.0 {
        return (0.5 * x).sinh().powi(2) * gamma(g) * gamma_ur(g, x);
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        term *= (g - k as f64) / x;
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    0.25 * (-(-x).exp_m1()).powi(2) * x.powf(g - 1.0) * sum
}

/// ∫_ℝ |τ|^{1−2H}/(τ² + A²) dτ = π A^{−2H}/sin(πH).
fn stationary_var(hurst: f64, a: f64) -> f64 {
    PI / (PI * hurst).sin() * a.powf(-2.0 * hurst)
}

fn full_half(pair: TimePair, a: f64) -> f64 {
    match pair {
        TimePair::StationaryVar => stationary_var(0.5, a),
        TimePair::StationaryStep { h } => {
            let h = h.abs();
            if a == 0.0 {
                2.0 * PI * h
            } else {
                -2.0 * PI / a * (-a * h).exp_m1()
            }
        }
        TimePair::Cross { t, t2 } => {
            let m = t.min(t2);
            if a == 0.0 {
                2.0 * PI * m
            } else {
                PI / a * (-a * (t - t2).abs()).exp() * (-(-2.0 * a * m).exp_m1())
            }
        }
        TimePair::Diff { t, s } => {
            let h = (t - s).abs();
            if a == 0.0 {
                2.0 * PI * h
            } else {
                let d = (-s.min(t) * a).exp() * (-h * a).exp_m1();
                PI / a * (-2.0 * (-a * h).exp_m1() - d * d)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::power_tail;

    fn tol() -> Tolerance {
        Tolerance::new(1e-13, 1e-11, 2_000_000)
    }

    /// Brute-force reference: head to a large cutoff plus 1/τ^{1+2H} tail.
    fn brute(k: &TauKernel, pair: TimePair, a: f64) -> f64 {
        let cut = 400.0;
        let head = k.head(pair, a, cut, tol()).unwrap().value;
        head + k.tail_by_terms(pair, a, cut, tol()).unwrap().value
    }

    #[test]
    fn phi_matches_quadrature() {
        for &h in &[0.5, 0.6, 0.75, 0.9] {
            for &y in &[0.0f64, 0.3, 1.0, 1.99, 2.0, 5.0, 40.0] {
                let direct = power_tail(
                    |s: f64| s.powf(1.0 - 2.0 * h) / (1.0 + s * s),
                    y.max(1e-3),
                    2.0 * h,
                    Tolerance::new(1e-15, 1e-13, 200_000),
                )
                .unwrap()
                .value
                    + if y < 1e-3 {
                        integrate(
                            |s: f64| s.powf(1.0 - 2.0 * h) / (1.0 + s * s),
                            0.0,
                            1e-3,
                            Tolerance::new(1e-16, 1e-13, 200_000),
                        )
                        .unwrap()
                        .value
                    } else {
                        0.0
                    };
                assert!((phi_h(h, y) - direct).abs() < 1e-9, "h={h} y={y}");
            }
        }
    }

    #[test]
    fn closed_forms_match_brute_force() {
        let k = TauKernel::new(0.5);
        for &a in &[0.05, 1.0, 7.0] {
            for pair in [
                TimePair::Cross { t: 1.0, t2: 0.6 },
                TimePair::Cross { t: 0.8, t2: 0.8 },
                TimePair::Diff { t: 1.0, s: 0.7 },
            ] {
                let exact = k.full(pair, a, tol()).unwrap().value;
                let b = brute(&k, pair, a);
                assert!((exact - b).abs() < 1e-7 * exact.abs().max(1.0), "{pair:?} a={a}: {exact} vs {b}");
            }
        }
    }

    #[test]
    fn sigma_form_matches_brute_force() {
        let k = TauKernel::new(0.75);
        for &a in &[0.05, 1.0, 7.0] {
            for pair in [
                TimePair::Cross { t: 1.0, t2: 0.6 },
                TimePair::Cross { t: 0.8, t2: 0.8 },
                TimePair::Diff { t: 1.0, s: 0.7 },
            ] {
                let exact = k.full(pair, a, tol()).unwrap().value;
                let b = brute(&k, pair, a);
                assert!((exact - b).abs() < 1e-6 * exact.abs().max(1.0), "{pair:?} a={a}: {exact} vs {b}");
            }
        }
    }

    #[test]
    fn diff_equals_three_term_combination() {
        for &h in &[0.5, 0.7] {
            let k = TauKernel::new(h);
            let (t, s) = (1.0, 0.55);
            for &a in &[0.3, 2.0] {
                let d = k.full(TimePair::Diff { t, s }, a, tol()).unwrap().value;
                let c = |x, y| k.full(TimePair::Cross { t: x, t2: y }, a, tol()).unwrap().value;
                let three = c(t, t) + c(s, s) - 2.0 * c(t, s);
                assert!((d - three).abs() < 1e-8, "{d} {three}");
            }
        }
    }

    #[test]
    fn ranges_partition_the_line() {
        for &h in &[0.5, 0.75] {
            let k = TauKernel::new(h);
            let pair = TimePair::Diff { t: 1.0, s: 0.9 };
            let a = 3.0;
            let full = k.full(pair, a, tol()).unwrap().value;
            let parts = k.range(pair, a, 0.0, 2.0, tol()).unwrap().value
                + k.range(pair, a, 2.0, 50.0, tol()).unwrap().value
                + k.range(pair, a, 50.0, f64::INFINITY, tol()).unwrap().value;
            assert!((full - parts).abs() < 1e-9, "{full} {parts}");
            // far tail evaluated by the cosine expansion agrees with full − head
            let lo = 2.0 * PI * MAX_PERIODS * 1.01;
            let by_terms = k.tail_by_terms(pair, a, lo, tol()).unwrap().value;
            let approx = 2.0 * (2.0 + 0.0) * lo.powf(-2.0 * h) / (2.0 * h);
            assert!(by_terms > 0.0 && (by_terms / approx - 1.0).abs() < 0.2);
        }
    }

    #[test]
    fn stationary_pairs_match_brute_force() {
        for &h in &[0.5, 0.6, 0.8] {
            let k = TauKernel::new(h);
            for &a in &[1e-3, 0.05, 1.0, 7.0, 40.0, 300.0] {
                for pair in [TimePair::StationaryVar, TimePair::StationaryStep { h: 1.0 }, TimePair::StationaryStep { h: 0.3 }] {
                    let exact = k.full(pair, a, tol()).unwrap().value;
                    let b = brute(&k, pair, a);
                    assert!((exact - b).abs() < 1e-7 * exact.abs().max(1.0), "H={h} {pair:?} a={a}: {exact} vs {b}");
                }
            }
        }
    }

    #[test]
    fn long_diff_approaches_stationary_step() {
        for &h in &[0.5, 0.7] {
            let k = TauKernel::new(h);
            let a = 2.0;
            let d = k.full(TimePair::Diff { t: 41.0, s: 40.0 }, a, tol()).unwrap().value;
            let st = k.full(TimePair::StationaryStep { h: 1.0 }, a, tol()).unwrap().value;
            assert!((d - st).abs() < 1e-8 * st, "{d} {st}");
        }
    }


    #[test]
    fn diff_numerator_is_symmetric_at_large_a() {
        for &a in &[1.0, 300.0, 1200.0, 5000.0] {
            for &tau in &[0.0, 0.7, 40.0] {
                let x = TimePair::Diff { t: 0.2, s: 0.998 }.numerator(a, tau);
                let y = TimePair::Diff { t: 0.998, s: 0.2 }.numerator(a, tau);
                assert!(x.is_finite() && (x - y).abs() <= 1e-13 * x.abs().max(1e-300), "{a} {tau}: {x} {y}");
            }
        }
    }

    #[test]
    fn incomplete_gamma_product_is_continuous() {
        for &g in &[0.2, 0.5, 0.9] {
            let lo = sinh2_upper_gamma(g, 50.0);
            let hi = sinh2_upper_gamma(g, 50.0 + 1e-9);
            assert!((lo - hi).abs() < 1e-8 * lo, "{g}: {lo} {hi}");
            assert!(sinh2_upper_gamma(g, 5000.0).is_finite());
        }
    }

}

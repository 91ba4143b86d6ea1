//! Covariances of the heat-equation field as one-dimensional radial
//! integrals of closed-form (or σ-represented) time kernels.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::models::{noise_constants, Point, SpdeModel};
use crate::quadrature::{
    geometric_breaks, integrate_with_breaks, oscillatory_tail, power_tail, Oscillator, Quad,
    QuadratureSpec, TauKernel, TimePair, Tolerance,
};
use crate::special::{bessel_j0, one_minus_j0, sphere_area};

/// Oscillation periods of the slowest spatial frequency covered by the
/// combined radial region before the per-frequency tails take over.
const COMBINED_PERIODS: f64 = 20.0;
const MAX_COMBINED_RADIUS: f64 = 1e9;

/// How the spatial phase enters a term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Phase {
    /// w(r·z)
    Plain,
    /// 1 − w(r·z), kept separate for stability
    OneMinus,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Term {
    pub pair: TimePair,
    pub scale: f64,
    pub freq: f64,
    pub phase: Phase,
}

/// The set of |τ| over which time kernels are integrated at a given radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum TauSet {
    Full,
    Range(f64, f64),
}

pub(crate) struct SpdeEngine<'a> {
    pub model: &'a SpdeModel,
    kernel: TauKernel,
    prefactor: f64,
    tol: Tolerance,
    cutoff: f64,
}

impl<'a> SpdeEngine<'a> {
    pub fn new(model: &'a SpdeModel, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let nc = noise_constants(model.hurst, model.dim)?;
        Ok(Self {
            model,
            kernel: TauKernel::new(model.hurst),
            prefactor: nc.c_hd * sphere_area(model.dim),
            tol: spec.tolerance(),
            cutoff: spec.tail_cutoff,
        })
    }

    fn weight(&self, x: f64) -> f64 {
        match self.model.dim {
            1 => x.cos(),
            _ => bessel_j0(x),
        }
    }

    fn one_minus_weight(&self, x: f64) -> f64 {
        match self.model.dim {
            1 => 2.0 * (0.5 * x).sin().powi(2),
            _ => one_minus_j0(x),
        }
    }

    fn oscillator(&self) -> Oscillator {
        match self.model.dim {
            1 => Oscillator::Cos,
            _ => Oscillator::J0,
        }
    }

    fn radial_power(&self) -> f64 {
        self.model.dim as f64 - 1.0 - self.model.beta
    }

    fn time_integral(&self, pair: TimePair, a: f64, set: TauSet) -> Result<Quad> {
        let tol = self.tol.scaled(0.1);
        match set {
            TauSet::Full => self.kernel.full(pair, a, tol),
            TauSet::Range(lo, hi) => self.kernel.range(pair, a, lo, hi, tol),
        }
    }

    /// Σ terms at radius r, without the radial weight.
    fn combined(&self, terms: &[Term], r: f64, set: TauSet) -> Result<f64> {
        let a = r.powf(self.model.alpha);
        let mut v = 0.0;
        for term in terms {
            let k = self.time_integral(term.pair, a, set)?.value;
            let phase = match term.phase {
                Phase::Plain => {
                    if term.freq == 0.0 {
                        1.0
                    } else {
                        self.weight(r * term.freq)
                    }
                }
                Phase::OneMinus => self.one_minus_weight(r * term.freq),
            };
            v += term.scale * phase * k;
        }
        Ok(v)
    }

    /// ∫_{r0}^{r1} r^{d−1−β} Σ terms dr over a finite radial interval.
    fn finite_piece(&self, terms: &[Term], r0: f64, r1: f64, set: TauSet, tol: Tolerance) -> Result<Quad> {
        if r1 <= r0 {
            return Ok(Quad::ZERO);
        }
        let p = self.radial_power();
        let q = p + 1.0;
        let mut fail: Option<Error> = None;
        let mut eval = |r: f64| -> f64 {
            match self.combined(terms, r, set) {
                Ok(v) => v,
                Err(e) => {
                    fail.get_or_insert(e);
                    0.0
                }
            }
        };
        let result = if r0 == 0.0 {
            let mut pts = vec![0.0];
            pts.extend(geometric_breaks((r1 * 1e-6).min(1e-3), r1, 4.0));
            let breaks: Vec<f64> = pts.iter().map(|r| r.powf(q) / q).collect();
            integrate_with_breaks(
                |w| {
                    let r = (q * w).powf(1.0 / q);
                    if r == 0.0 {
                        0.0
                    } else {
                        eval(r)
                    }
                },
                &breaks,
                tol,
            )?
        } else {
            let pts = geometric_breaks(r0, r1, 4.0);
            integrate_with_breaks(|r| r.powf(p) * eval(r), &pts, tol)?
        };
        if let Some(e) = fail {
            return Err(e);
        }
        Ok(result)
    }

    /// ∫_{r0}^{∞} r^{d−1−β} Σ terms dr with per-frequency tails.
    fn infinite_piece(&self, terms: &[Term], r0: f64, set: TauSet, tol: Tolerance) -> Result<Quad> {
        let slowest = terms
            .iter()
            .map(|t| t.freq)
            .filter(|f| *f > 0.0)
            .fold(f64::INFINITY, f64::min);
        let mut knee = self.cutoff.max(r0);
        if slowest.is_finite() {
            knee = knee.max((COMBINED_PERIODS * 2.0 * PI / slowest).min(MAX_COMBINED_RADIUS));
        }
        let body = self.finite_piece(terms, r0, knee, set, tol)?;
        let tail_tol = tol.with_abs((0.1 * tol.rel * body.value.abs()).max(tol.abs));
        let p = self.radial_power();
        let alpha = self.model.alpha;
        // Frequency-zero part of every term.
        let mut fail: Option<Error> = None;
        let kappa = (2.0 * self.model.theta2()).max(0.05);
        let mut zero = |r: f64| -> f64 {
            let a = r.powf(alpha);
            let mut v = 0.0;
            for term in terms {
                let w0 = match term.phase {
                    Phase::Plain if term.freq == 0.0 => 1.0,
                    Phase::Plain => 0.0,
                    Phase::OneMinus => 1.0,
                };
                if w0 == 0.0 {
                    continue;
                }
                match self.time_integral(term.pair, a, set) {
                    Ok(k) => v += w0 * term.scale * k.value,
                    Err(e) => {
                        fail.get_or_insert(e);
                    }
                }
            }
            r.powf(p) * v
        };
        let mut total = body.combine(power_tail(&mut zero, knee, kappa, tail_tol)?);
        if let Some(e) = fail {
            return Err(e);
        }
        // Oscillating parts, one frequency at a time.
        for term in terms.iter().filter(|t| t.freq > 0.0) {
            let sign = match term.phase {
                Phase::Plain => 1.0,
                Phase::OneMinus => -1.0,
            };
            let mut fail: Option<Error> = None;
            let amp = |r: f64| -> f64 {
                match self.time_integral(term.pair, r.powf(alpha), set) {
                    Ok(k) => r.powf(p) * k.value,
                    Err(e) => {
                        fail.get_or_insert(e);
                        0.0
                    }
                }
            };
            let q = oscillatory_tail(amp, knee, term.freq, self.oscillator(), tail_tol)?;
            if let Some(e) = fail {
                return Err(e);
            }
            total = total.combine(q.scale(sign * term.scale));
        }
        Ok(total)
    }

    /// c_{H,d} ∫ |ξ|^{-β} (Σ terms) dξ over the whole spectral domain.
    pub fn integrate_terms(&self, terms: &[Term]) -> Result<Quad> {
        Ok(self.infinite_piece(terms, 0.0, TauSet::Full, self.tol)?.scale(self.prefactor))
    }

    /// Same integral restricted to max(|τ|^{θ₁}, |ξ|^{θ₂}) ∈ [lo, hi).
    pub fn integrate_terms_band(&self, terms: &[Term], lo: f64, hi: f64) -> Result<Quad> {
        let t1 = self.model.theta1();
        let t2 = self.model.theta2();
        let tc = |c: f64| if c.is_infinite() { f64::INFINITY } else { c.powf(1.0 / t1) };
        let xc = |c: f64| if c.is_infinite() { f64::INFINITY } else { c.powf(1.0 / t2) };
        let (ta, tb, xa, xb) = (tc(lo), tc(hi), xc(lo), xc(hi));
        let mut total = Quad::ZERO;
        // |ξ| < X_a: |τ| in [T_a, T_b)
        if xa > 0.0 {
            total = total.combine(self.finite_piece(terms, 0.0, xa, TauSet::Range(ta, tb), self.tol)?);
        }
        // X_a <= |ξ| < X_b: |τ| in [0, T_b)
        let set = if tb.is_infinite() {
            TauSet::Full
        } else {
            TauSet::Range(0.0, tb)
        };
        let outer = if xb.is_infinite() {
            self.infinite_piece(terms, xa, set, self.tol)?
        } else {
            self.finite_piece(terms, xa, xb, set, self.tol)?
        };
        Ok(total.combine(outer).scale(self.prefactor))
    }
}

fn spatial_distance(p: &Point, q: &Point) -> f64 {
    p.space()
        .iter()
        .zip(q.space())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn covariance_terms(p: &Point, q: &Point) -> Vec<Term> {
    vec![Term {
        pair: TimePair::Cross {
            t: p.time(),
            t2: q.time(),
        },
        scale: 1.0,
        freq: spatial_distance(p, q),
        phase: Phase::Plain,
    }]
}

/// |𝓕G_p − 𝓕G_q|² split into non-negative pieces.
pub(crate) fn increment_terms(p: &Point, q: &Point) -> Vec<Term> {
    let (t, s) = (p.time(), q.time());
    let z = spatial_distance(p, q);
    let mut terms = Vec::with_capacity(2);
    if t != s {
        terms.push(Term {
            pair: TimePair::Diff { t, s },
            scale: 1.0,
            freq: 0.0,
            phase: Phase::Plain,
        });
    }
    if z > 0.0 {
        terms.push(Term {
            pair: TimePair::Cross { t, t2: s },
            scale: 2.0,
            freq: z,
            phase: Phase::OneMinus,
        });
    }
    terms
}

/// Spectral mass of a unit step of the time-stationary field: along time,
/// or along the first space axis.
pub(crate) fn stationary_step_mass(model: &SpdeModel, spec: &QuadratureSpec, space: bool) -> Result<Quad> {
    let engine = SpdeEngine::new(model, spec)?;
    let term = if space {
        Term {
            pair: TimePair::StationaryVar,
            scale: 2.0,
            freq: 1.0,
            phase: Phase::OneMinus,
        }
    } else {
        Term {
            pair: TimePair::StationaryStep { h: 1.0 },
            scale: 1.0,
            freq: 0.0,
            phase: Phase::Plain,
        }
    };
    engine.integrate_terms(&[term])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_of_default_model_matches_closed_form() {
        // α = 2, β = 1/2, H = 1/2: Var u(t, x) = 2πc ∫ r^{-5/2}(1 − e^{-2tr²}) dr
        let m = SpdeModel::default();
        let spec = QuadratureSpec::default();
        let e = SpdeEngine::new(&m, &spec).unwrap();
        let t = 1.0;
        let p = Point::new(vec![t, 0.0]);
        let v = e.integrate_terms(&covariance_terms(&p, &p)).unwrap().value;
        // with r² = s the radial integral is ½ (2t)^{3/4} Γ(1/4) (4/3)
        let g = statrs::function::gamma::gamma(0.25);
        let radial = 0.5 * (2.0 * t).powf(0.75) * g * 4.0 / 3.0;
        let c = noise_constants(0.5, 1).unwrap().c_hd;
        let exact = c * 2.0 * PI * radial;
        assert!((v / exact - 1.0).abs() < 1e-6, "{v} vs {exact}");
    }
}

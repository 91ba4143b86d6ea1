//! Covariances of the product-kernel field.
//!
//! Full-spectrum integrals use the subordination identity
//! a^{−s} = Γ(s)^{−1} ∫_0^∞ u^{s−1} e^{−ua} du, which splits the k-dimensional
//! integral into one-dimensional stable-density transforms. Frequency bands
//! fall back to iterated integration over the positive orthant.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::models::{Point, ProductModel};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::quadrature::{
    geometric_breaks, integrate_with_breaks, oscillatory_tail, power_tail, Oscillator, Quad,
    QuadratureSpec, Tolerance,
};

const COMBINED_PERIODS: f64 = 20.0;
const MAX_COMBINED: f64 = 1e9;

/// One coordinate's factor of the integrand after folding ξ_j → −ξ_j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Factor {
    /// Re (e^{ixξ} − 1) conj(e^{iyξ} − 1) = 4 sin(xξ/2) sin(yξ/2) cos((x−y)ξ/2)
    Cross { x: f64, y: f64 },
    /// |e^{ixξ} − e^{iyξ}|² with h = x − y
    Diff { h: f64 },
}

impl Factor {
    fn eval(self, xi: f64) -> f64 {
        match self {
            Factor::Cross { x, y } => {
                4.0 * (0.5 * x * xi).sin() * (0.5 * y * xi).sin() * (0.5 * (x - y) * xi).cos()
            }
            Factor::Diff { h } => 4.0 * (0.5 * h * xi).sin().powi(2),
        }
    }

    fn cos_terms(self) -> Vec<(f64, f64)> {
        let raw = match self {
            Factor::Cross { x, y } => vec![(1.0, 0.0), (1.0, (x - y).abs()), (-1.0, x.abs()), (-1.0, y.abs())],
            Factor::Diff { h } => vec![(2.0, 0.0), (-2.0, h.abs())],
        };
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (c, w) in raw {
            match out.iter_mut().find(|(_, w2)| *w2 == w) {
                Some(slot) => slot.0 += c,
                None => out.push((c, w)),
            }
        }
        out.retain(|(c, _)| *c != 0.0);
        out
    }

    fn is_zero(self) -> bool {
        match self {
            Factor::Cross { x, y } => x == 0.0 || y == 0.0,
            Factor::Diff { h } => h == 0.0,
        }
    }
}

pub(crate) struct ProductEngine<'a> {
    model: &'a ProductModel,
    exponent: f64,
    tol: Tolerance,
}

/// Frequency region of a band: max_j |ξ_j|^{α_j} ∈ [lo, hi).
#[derive(Debug, Clone, Copy)]
struct Region {
    lo: f64,
    hi: f64,
}

impl<'a> ProductEngine<'a> {
    pub fn new(model: &'a ProductModel, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            model,
            exponent: model.big_q() + 2.0,
            tol: spec.tolerance(),
        })
    }

    /// ∫_{ℝ^k} ∏ factor_j(ξ_j) f(ξ) dξ.
    pub fn integrate(&self, factors: &[Factor]) -> Result<Quad> {
        self.integrate_region(factors, 0.0, f64::INFINITY)
    }

    pub fn integrate_region(&self, factors: &[Factor], lo: f64, hi: f64) -> Result<Quad> {
        if factors.len() != self.model.k() {
            return Err(Error::DimensionMismatch {
                expected: self.model.k(),
                got: factors.len(),
            });
        }
        if factors.iter().any(|f| f.is_zero()) {
            return Ok(Quad::ZERO);
        }
        if lo <= 0.0 && hi.is_infinite() {
            return self.integrate_combination(&[(1.0, factors.to_vec())]);
        }
        self.level(factors, 0, 0.0, Region { lo, hi }, lo > 0.0, self.tol)
    }

    /// Σ_i c_i ∫ ∏_j factor_ij(ξ_j) f(ξ) dξ over the whole spectrum, as a single
    /// integral Γ(s)^{−1} ∫ u^s Σ_i c_i ∏_j G_ij(u) d(ln u) with
    /// G_ij(u) = ∫_ℝ factor_ij(ξ) e^{−u|ξ|^{α_j}} dξ.
    pub fn integrate_combination(&self, combo: &[(f64, Vec<Factor>)]) -> Result<Quad> {
        for (_, f) in combo {
            if f.len() != self.model.k() {
                return Err(Error::DimensionMismatch {
                    expected: self.model.k(),
                    got: f.len(),
                });
            }
        }
        let combo: Vec<(f64, Vec<Vec<(f64, f64)>>)> = combo
            .iter()
            .filter(|(c, f)| *c != 0.0 && !f.iter().any(|x| x.is_zero()))
            .map(|(c, f)| (*c, f.iter().map(|x| x.cos_terms()).collect()))
            .collect();
        if combo.is_empty() {
            return Ok(Quad::ZERO);
        }
        let s = self.exponent;
        let q = self.model.big_q();
        let alphas = &self.model.alphas;
        let tables = alphas
            .iter()
            .map(|a| StableTable::shared(*a))
            .collect::<Result<Vec<_>>>()?;
        let (mut v_lo, mut v_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut centers = Vec::new();
        for (_, axes) in &combo {
            for (a, terms) in alphas.iter().zip(axes) {
                for &(_, w) in terms.iter().filter(|t| t.1 > 0.0) {
                    v_lo = v_lo.min(a * (w / SUB_X_HI).ln());
                    v_hi = v_hi.max(a * (w / SUB_X_LO).ln());
                    centers.push(a * w.ln());
                }
            }
        }
        let fail: RefCell<Option<Error>> = RefCell::new(None);
        let body_f = |v: f64| -> f64 {
            let scales: Vec<f64> = alphas.iter().map(|a| (-v / a).exp()).collect();
            let mut total = 0.0;
            for (c, axes) in &combo {
                let mut prod = *c;
                for ((terms, table), scale) in axes.iter().zip(&tables).zip(&scales) {
                    let mut acc = 0.0;
                    for &(cw, w) in terms.iter().filter(|t| t.1 > 0.0) {
                        match table.eval(w * scale) {
                            Ok(d) => acc += cw * d,
                            Err(e) => {
                                fail.borrow_mut().get_or_insert(e);
                            }
                        }
                    }
                    prod *= -2.0 * scale * acc;
                }
                total += prod;
            }
            total * (s * v - ln_gamma(s)).exp()
        };
        let mut breaks = vec![v_lo, v_hi];
        breaks.extend(centers.iter().copied().filter(|c| *c > v_lo && *c < v_hi));
        let mut v = v_lo.ceil();
        while v < v_hi {
            breaks.push(v);
            v += 1.0;
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let tol = self.tol.scaled(0.1).with_abs(self.tol.abs * 1e-3);
        let body = integrate_with_breaks(body_f, &breaks, tol)?;
        if let Some(e) = fail.borrow_mut().take() {
            return Err(e);
        }
        // u below e^{v_lo}: every D has reached Γ(1 + 1/α); above e^{v_hi}: D(x) ≈ x² Γ(3/α)/(2α).
        let (mut low, mut high) = (0.0, 0.0);
        for (c, axes) in &combo {
            let (mut l, mut h) = (*c, *c);
            for (a, terms) in alphas.iter().zip(axes) {
                let c0: f64 = terms.iter().filter(|t| t.1 == 0.0).map(|t| t.0).sum();
                l *= 2.0 * c0 * gamma(1.0 + 1.0 / a);
                let m2: f64 = terms.iter().map(|t| t.0 * t.1 * t.1).sum();
                h *= -m2 * gamma(3.0 / a) / a;
            }
            low += l;
            high += h;
        }
        let low = low * ((s - q) * v_lo - ln_gamma(s)).exp() / (s - q);
        let high = high * ((s - 3.0 * q) * v_hi - ln_gamma(s)).exp() / (3.0 * q - s);
        Ok(Quad {
            value: body.value + low + high,
            ..body
        })
    }

    /// Remaining integral over coordinates m.. given accumulated Σ_{j<m} ξ_j^{α_j}.
    fn level(&self, factors: &[Factor], m: usize, acc: f64, region: Region, inside: bool, tol: Tolerance) -> Result<Quad> {
        let k = factors.len();
        if m == k {
            if inside || acc == 0.0 {
                return Ok(Quad::ZERO);
            }
            return Ok(Quad {
                value: acc.powf(-self.exponent),
                ..Quad::ZERO
            });
        }
        let alpha = self.model.alphas[m];
        let limit = |c: f64| if c.is_infinite() { f64::INFINITY } else { c.powf(1.0 / alpha) };
        let (la, lb) = (limit(region.lo), limit(region.hi));
        let inner_tol = tol.scaled(0.1);
        let mut total = Quad::ZERO;
        if inside {
            let top = la.min(lb);
            total = total.combine(self.piece(factors, m, acc, 0.0, top, region, true, inner_tol, tol)?);
            if lb > la {
                total = total.combine(self.piece(factors, m, acc, la, lb, region, false, inner_tol, tol)?);
            }
        } else {
            total = total.combine(self.piece(factors, m, acc, 0.0, lb, region, false, inner_tol, tol)?);
        }
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn piece(
        &self,
        factors: &[Factor],
        m: usize,
        acc: f64,
        lo: f64,
        hi: f64,
        region: Region,
        inside: bool,
        inner_tol: Tolerance,
        tol: Tolerance,
    ) -> Result<Quad> {
        if hi <= lo {
            return Ok(Quad::ZERO);
        }
        let alpha = self.model.alphas[m];
        let factor = factors[m];
        let fail: RefCell<Option<Error>> = RefCell::new(None);
        let mut rest = |xi: f64| -> f64 {
            match self.level(factors, m + 1, acc + xi.powf(alpha), region, inside, inner_tol) {
                Ok(q) => 2.0 * q.value,
                Err(e) => {
                    fail.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        };
        let terms = factor.cos_terms();
        let slowest = terms
            .iter()
            .map(|t| t.1)
            .filter(|w| *w > 0.0)
            .fold(f64::INFINITY, f64::min);
        let fastest = terms.iter().map(|t| t.1).fold(0.0, f64::max);
        let scale = if acc > 0.0 { acc.powf(1.0 / alpha) } else { 1.0 / fastest.max(1e-300) };
        let knee = if hi.is_finite() {
            hi
        } else {
            (COMBINED_PERIODS * 2.0 * PI / slowest).max(10.0 * scale).max(lo).min(MAX_COMBINED)
        };
        let start = if lo > 0.0 { lo } else { (1e-6 * scale).min(knee * 1e-3) };
        let mut pts = geometric_breaks(start, knee, 4.0);
        let body = if lo == 0.0 && acc == 0.0 {
            // ξ^{1−2α} behaviour at the origin: w = ξ^q/q with q = 2 − 2α
            let q = 2.0 - 2.0 * alpha;
            pts.insert(0, 0.0);
            let breaks: Vec<f64> = pts.iter().map(|x| x.powf(q) / q).collect();
            integrate_with_breaks(
                |w| {
                    let xi = (q * w).powf(1.0 / q);
                    if xi == 0.0 {
                        return 0.0;
                    }
                    factor.eval(xi) * rest(xi) * xi.powf(1.0 - q)
                },
                &breaks,
                tol,
            )?
        } else {
            if lo == 0.0 {
                pts.insert(0, 0.0);
            }
            integrate_with_breaks(|xi| factor.eval(xi) * rest(xi), &pts, tol)?
        };
        if let Some(e) = fail.borrow_mut().take() {
            return Err(e);
        }
        if hi.is_finite() {
            return Ok(body);
        }
        let tail_tol = tol.with_abs((0.1 * tol.rel * body.value.abs()).max(tol.abs));
        let remaining: f64 = self.model.alphas[m + 1..].iter().map(|a| 1.0 / a).sum();
        let kappa = alpha * (self.exponent - remaining) - 1.0;
        let mut total = body;
        for (c, w) in terms {
            let q = if w == 0.0 {
                power_tail(&mut rest, knee, kappa, tail_tol)?
            } else {
                oscillatory_tail(&mut rest, knee, w, Oscillator::Cos, tail_tol)?
            };
            total = total.combine(q.scale(c));
        }
        if let Some(e) = fail.borrow_mut().take() {
            return Err(e);
        }
        Ok(total)
    }
}

/// Arguments beyond which the subordinated integrand uses its asymptotic forms.
const SUB_X_HI: f64 = 1e8;
const SUB_X_LO: f64 = 1e-6;

/// D(x) = ∫_0^∞ (1 − cos xη) e^{−η^α} dη = Γ(1 + 1/α) − π p_α(x), where p_α is
/// the symmetric α-stable density.
pub(crate) fn stable_gap(alpha: f64, x: f64) -> Result<f64> {
    let x = x.abs();
    if x == 0.0 {
        return Ok(0.0);
    }
    let g0 = gamma(1.0 + 1.0 / alpha);
    if let Some((p, biggest)) = stable_density_series(alpha, x) {
        let d = g0 - p;
        if biggest < 100.0 * d {
            return Ok(d);
        }
    }
    // w = η^α; 2 sin²(xη/2) has period 2π/x in η
    let w_max = 46.0f64;
    let eta_max = w_max.powf(1.0 / alpha);
    let periods = (x * eta_max / (2.0 * PI)).ceil();
    if periods > 1e5 {
        return Err(Error::Quadrature(format!(
            "stable transform at α = {alpha}, x = {x} needs {periods} periods"
        )));
    }
    let mut breaks: Vec<f64> = (0..=w_max as usize).map(|w| w as f64).collect();
    for m in 1..periods as usize {
        breaks.push((2.0 * PI * m as f64 / x).powf(alpha));
    }
    breaks.retain(|w| *w <= w_max);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let e = 1.0 / alpha - 1.0;
    let q = integrate_with_breaks(
        |w| {
            if w == 0.0 {
                return 0.0;
            }
            let eta = w.powf(1.0 / alpha);
            2.0 * (0.5 * x * eta).sin().powi(2) * (-w).exp() * w.powf(e) / alpha
        },
        &breaks,
        Tolerance::new(1e-300, 1e-12, 400_000),
    )?;
    Ok(q.value)
}

/// Piecewise Chebyshev interpolant of ln D(e^t) on [ln SUB_X_LO, ln SUB_X_HI],
/// one table per α shared across engines.
pub(crate) struct StableTable {
    alpha: f64,
    /// ∫ η² e^{−η^α} dη and ∫ η⁴ e^{−η^α} dη
    m2: f64,
    m4: f64,
    t0: f64,
    /// Values at Chebyshev–Lobatto nodes, TABLE_NODES per cell of width TABLE_CELL in t.
    values: Vec<[f64; TABLE_NODES]>,
}

const TABLE_NODES: usize = 21;
const TABLE_CELL: f64 = 0.5;

impl StableTable {
    fn shared(alpha: f64) -> Result<Arc<StableTable>> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<StableTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("table cache poisoned").get(&alpha.to_bits()) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(StableTable::build(alpha)?);
        cache
            .lock()
            .expect("table cache poisoned")
            .insert(alpha.to_bits(), Arc::clone(&table));
        Ok(table)
    }

    fn build(alpha: f64) -> Result<Self> {
        let t0 = SUB_X_LO.ln().floor();
        let t1 = SUB_X_HI.ln().ceil();
        let mut values = Vec::new();
        let mut a = t0;
        while a < t1 {
            let mut row = [0.0; TABLE_NODES];
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = stable_gap(alpha, (a + TABLE_CELL * node(j)).exp())?.ln();
            }
            values.push(row);
            a += TABLE_CELL;
        }
        Ok(Self {
            alpha,
            m2: gamma(3.0 / alpha) / alpha,
            m4: gamma(5.0 / alpha) / alpha,
            t0,
            values,
        })
    }

    pub(crate) fn eval(&self, x: f64) -> Result<f64> {
        let x = x.abs();
        if x == 0.0 {
            return Ok(0.0);
        }
        if x < SUB_X_LO {
            return Ok(0.5 * x * x * self.m2 - x.powi(4) * self.m4 / 24.0);
        }
        let t = (x.ln() - self.t0) / TABLE_CELL;
        let cell = t.floor();
        if cell < 0.0 || cell as usize >= self.values.len() {
            return stable_gap(self.alpha, x);
        }
        let row = &self.values[cell as usize];
        // barycentric interpolation within the cell
        let s = t - cell;
        let (mut num, mut den) = (0.0, 0.0);
        for (j, v) in row.iter().enumerate() {
            let d = s - node(j);
            if d == 0.0 {
                return Ok(v.exp());
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == TABLE_NODES - 1 {
                w *= 0.5;
            }
            num += w * v / d;
            den += w / d;
        }
        Ok((num / den).exp())
    }
}

/// Chebyshev–Lobatto node j mapped to [0, 1].
fn node(j: usize) -> f64 {
    0.5 * (1.0 - (PI * j as f64 / (TABLE_NODES - 1) as f64).cos())
}

/// π p_α(x) = Σ_{n≥1} (−1)^{n+1} Γ(nα + 1)/n! sin(nπα/2) x^{−nα−1}, convergent
/// for α < 1. Returns the sum and its largest term.
fn stable_density_series(alpha: f64, x: f64) -> Option<(f64, f64)> {
    let lx = x.ln();
    let mut sum = 0.0;
    let mut biggest: f64 = 0.0;
    for n in 1..2000 {
        let nf = n as f64;
        let mag = (ln_gamma(nf * alpha + 1.0) - ln_gamma(nf + 1.0) - (nf * alpha + 1.0) * lx).exp();
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * mag * (0.5 * nf * PI * alpha).sin();
        biggest = biggest.max(mag);
        if n > 3 && mag < 1e-17 * biggest {
            return Some((sum, biggest));
        }
        if !mag.is_finite() {
            return None;
        }
    }
    None
}

pub(crate) fn covariance_factors(p: &Point, q: &Point) -> Vec<Factor> {
    p.coords
        .iter()
        .zip(&q.coords)
        .map(|(&x, &y)| Factor::Cross { x, y })
        .collect()
}

/// Factors of the increment when p and q differ in exactly one coordinate.
pub(crate) fn axis_increment_factors(p: &Point, q: &Point) -> Option<Vec<Factor>> {
    let differing: Vec<usize> = (0..p.dim()).filter(|&j| p.coords[j] != q.coords[j]).collect();
    if differing.len() != 1 {
        return None;
    }
    let j0 = differing[0];
    Some(
        (0..p.dim())
            .map(|j| {
                if j == j0 {
                    Factor::Diff {
                        h: p.coords[j] - q.coords[j],
                    }
                } else {
                    let x = p.coords[j];
                    Factor::Cross { x, y: x }
                }
            })
            .collect(),
    )
}

//! Estimators: slope fits, small-ball probabilities, moduli of continuity
//! and LIL constants.

use std::io::Write;

use nalgebra::Complex;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{increment_variance, stationary_step_mass};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{delta_metric, derive_exponents, FieldModel, Point, SpdeModel};
use crate::quadrature::{
    weighted_spectral_integral, IntegralResult, QuadratureSpec, SpectralIntegrand, SpectralOrder,
};
use crate::sampler::Ensemble;

/// Ordinary least-squares line y = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs two equal-length series of at least 2 points ({} vs {})",
            n,
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in slope fit".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit with constant abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
        r2,
        n,
    })
}


/// Wilson score interval for k successes out of n at normal quantile z.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

const Z95: f64 = 1.959_963_984_540_054;

/// Which distance normalizes the modulus statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// d(x, y) = ‖v(x) − v(y)‖.
    Canonical,
    /// The anisotropic metric Δ.
    Delta,
}

pub fn distance(model: &FieldModel, metric: Metric, p: &Point, q: &Point, spec: &QuadratureSpec) -> Result<f64> {
    match metric {
        Metric::Canonical => Ok(increment_variance(model, p, q, spec)?.sqrt()),
        Metric::Delta => delta_metric(p, q, &derive_exponents(model)?),
    }
}

/// Distance from every point to `points[center]`.
pub fn distances_to_center(
    model: &FieldModel,
    metric: Metric,
    points: &[Point],
    center: usize,
    spec: &QuadratureSpec,
    exec: Execution,
) -> Result<Vec<f64>> {
    if center >= points.len() {
        return Err(Error::InvalidArgument("center index out of range".into()));
    }
    exec.try_map(points.len(), |i| {
        if i == center {
            Ok(0.0)
        } else {
            distance(model, metric, &points[i], &points[center], spec)
        }
    })
}

/// Maximum number of pairs used by the uniform modulus.
pub const MAX_PAIRS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

/// All unordered pairs, or a seeded uniform subsample of `cap` of them.
pub fn grid_pairs(
    model: &FieldModel,
    metric: Metric,
    points: &[Point],
    cap: usize,
    seed: u64,
    spec: &QuadratureSpec,
    exec: Execution,
) -> Result<Vec<PointPair>> {
    let n = points.len();
    let total = n * n.saturating_sub(1) / 2;
    let cap = cap.min(MAX_PAIRS);
    let index = |k: usize| {
        // k-th pair in row-major order of the strict upper triangle
        let mut i = 0;
        let mut rem = k;
        while rem >= n - 1 - i {
            rem -= n - 1 - i;
            i += 1;
        }
        (i, i + 1 + rem)
    };
    let chosen: Vec<usize> = if total <= cap {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, total, cap).into_vec();
        v.sort_unstable();
        v
    };
    exec.try_map(chosen.len(), |k| {
        let (i, j) = index(chosen[k]);
        Ok(PointPair {
            i,
            j,
            distance: distance(model, metric, &points[i], &points[j], spec)?,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBallEntry {
    pub r: f64,
    pub u: f64,
    pub p_hat: f64,
    pub n_paths: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Grid points inside the ball, center excluded.
    pub ball_points: usize,
    pub grid_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBallCurve {
    pub entries: Vec<SmallBallEntry>,
}

/// Fewer ball points than this triggers a resolution warning.
pub const MIN_BALL_POINTS: usize = 50;
pub const MIN_SMALL_BALL_PATHS: usize = 1000;

/// P{sup over the Δ-ball of |v − v(center)| ≤ u} for each (r, u).
pub fn estimate_small_ball(
    e: &Ensemble,
    center: usize,
    distances: &[f64],
    levels: &[(f64, f64)],
    exec: Execution,
) -> Result<SmallBallCurve> {
    check_grid(e, center, distances)?;
    if e.n_paths() < MIN_SMALL_BALL_PATHS {
        return Err(Error::InvalidArgument(format!(
            "small-ball estimation needs at least {MIN_SMALL_BALL_PATHS} paths, got {}",
            e.n_paths()
        )));
    }
    let mut entries = Vec::with_capacity(levels.len());
    for &(r, u) in levels {
        if !(u >= 0.0 && u < r) {
            return Err(Error::InvalidArgument(format!("small-ball level needs 0 <= u < r, got ({r}, {u})")));
        }
        let ball: Vec<usize> = (0..distances.len())
            .filter(|&i| i != center && distances[i] <= r)
            .collect();
        if ball.is_empty() {
            return Err(Error::InvalidArgument(format!("no grid point within Δ-radius {r}")));
        }
        let sups = exec.map(e.n_paths(), |p| {
            let c = e.values[(p, center)];
            ball.iter().map(|&i| (e.values[(p, i)] - c).abs()).fold(0.0, f64::max)
        });
        let k = sups.iter().filter(|s| **s <= u).count();
        let n = e.n_paths();
        let (ci_low, ci_high) = wilson_interval(k, n, Z95);
        entries.push(SmallBallEntry {
            r,
            u,
            p_hat: k as f64 / n as f64,
            n_paths: n,
            ci_low,
            ci_high,
            ball_points: ball.len(),
            grid_warning: ball.len() < MIN_BALL_POINTS,
        });
    }
    Ok(SmallBallCurve { entries })
}

impl SmallBallCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,u,p_hat,n_paths,ci_low,ci_high,ball_points,grid_warning")?;
        for s in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.r, s.u, s.p_hat, s.n_paths, s.ci_low, s.ci_high, s.ball_points, s.grid_warning
            )?;
        }
        Ok(())
    }
}

/// Regression of log(−log p̂) on log(r/u); the slope estimates Q.
pub fn fit_small_ball_exponent(curve: &SmallBallCurve) -> Result<SlopeFit> {
    let usable: Vec<&SmallBallEntry> = curve
        .entries
        .iter()
        .filter(|s| s.p_hat > 0.0 && s.p_hat < 1.0)
        .collect();
    if usable.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "exponent fit needs at least 4 entries with 0 < p < 1, got {}",
            usable.len()
        )));
    }
    let x: Vec<f64> = usable.iter().map(|s| (s.r / s.u).ln()).collect();
    let y: Vec<f64> = usable.iter().map(|s| (-s.p_hat.ln()).ln()).collect();
    ols_fit(&x, &y)
}

/// Largest admissible dyadic level; keeps log log(1/r) positive.
pub const MAX_LEVEL: f64 = 0.1;

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("empty level list".into()));
    }
    for w in levels.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidArgument("levels must be strictly decreasing".into()));
        }
    }
    if let Some(r) = levels.iter().find(|r| !(**r > 0.0 && **r < MAX_LEVEL)) {
        return Err(Error::InvalidArgument(format!("level {r} outside (0, {MAX_LEVEL})")));
    }
    Ok(())
}

/// Dyadic levels 2^{−n} for n in `from..=to`.
pub fn dyadic_levels(from: i32, to: i32) -> Result<Vec<f64>> {
    let levels: Vec<f64> = (from..=to).map(|n| 2f64.powi(-n)).collect();
    check_levels(&levels)?;
    Ok(levels)
}

fn check_grid(e: &Ensemble, center: usize, distances: &[f64]) -> Result<()> {
    if distances.len() != e.n_points() {
        return Err(Error::DimensionMismatch {
            expected: e.n_points(),
            got: distances.len(),
        });
    }
    if center >= e.n_points() {
        return Err(Error::InvalidArgument("center index out of range".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub scale: f64,
    /// Points (or pairs) entering the supremum at this level.
    pub count: usize,
    pub per_path: Vec<f64>,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub statistic: String,
    pub metric: Option<Metric>,
    pub levels: Vec<LevelRecord>,
    /// Per path, min over the finest half of the levels.
    pub liminf_proxy: Vec<f64>,
    /// Per path, max over the finest half of the levels.
    pub limsup_proxy: Vec<f64>,
    pub liminf_median: f64,
    pub limsup_median: f64,
    pub reference_band: Option<(f64, f64)>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

impl ModulusReport {
    fn assemble(
        statistic: &str,
        metric: Option<Metric>,
        scales: &[f64],
        counts: Vec<usize>,
        per_path_levels: Vec<Vec<f64>>,
        reference_band: Option<(f64, f64)>,
    ) -> Self {
        let n_paths = per_path_levels.len();
        let n_levels = scales.len();
        let levels: Vec<LevelRecord> = (0..n_levels)
            .map(|l| {
                let per_path: Vec<f64> = per_path_levels.iter().map(|p| p[l]).collect();
                let s = sorted(&per_path);
                LevelRecord {
                    scale: scales[l],
                    count: counts[l],
                    median: quantile(&s, 0.5),
                    q10: quantile(&s, 0.1),
                    q90: quantile(&s, 0.9),
                    max: s.last().copied().unwrap_or(f64::NAN),
                    per_path,
                }
            })
            .collect();
        let finest = n_levels / 2;
        let tail = |p: &Vec<f64>| p[finest.min(n_levels.saturating_sub(1))..].to_vec();
        let liminf_proxy: Vec<f64> = (0..n_paths)
            .map(|i| tail(&per_path_levels[i]).into_iter().fold(f64::INFINITY, f64::min))
            .collect();
        let limsup_proxy: Vec<f64> = (0..n_paths)
            .map(|i| tail(&per_path_levels[i]).into_iter().fold(0.0, f64::max))
            .collect();
        Self {
            statistic: statistic.into(),
            metric,
            liminf_median: quantile(&sorted(&liminf_proxy), 0.5),
            limsup_median: quantile(&sorted(&limsup_proxy), 0.5),
            levels,
            liminf_proxy,
            limsup_proxy,
            reference_band,
        }
    }

    /// One row per level: scale, count, median, q10, q90, max.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "scale,count,median,q10,q90,max")?;
        for l in &self.levels {
            writeln!(w, "{},{},{},{},{},{}", l.scale, l.count, l.median, l.q10, l.q90, l.max)?;
        }
        Ok(())
    }
}

/// sup over B(center, r) of |v − v(center)| / (r (log log 1/r)^{−1/Q}).
pub fn chung_statistic(
    e: &Ensemble,
    center: usize,
    distances: &[f64],
    radii: &[f64],
    big_q: f64,
    exec: Execution,
) -> Result<ModulusReport> {
    check_grid(e, center, distances)?;
    check_levels(radii)?;
    let balls = level_sets(distances, center, radii)?;
    let per_path = exec.map(e.n_paths(), |p| {
        let c = e.values[(p, center)];
        radii
            .iter()
            .zip(&balls)
            .map(|(&r, ball)| {
                let sup = ball.iter().map(|&i| (e.values[(p, i)] - c).abs()).fold(0.0, f64::max);
                sup / (r * (1.0 / r).ln().ln().powf(-1.0 / big_q))
            })
            .collect::<Vec<f64>>()
    });
    let counts = balls.iter().map(Vec::len).collect();
    Ok(ModulusReport::assemble("chung", None, radii, counts, per_path, None))
}

fn level_sets(distances: &[f64], center: usize, levels: &[f64]) -> Result<Vec<Vec<usize>>> {
    levels
        .iter()
        .map(|&r| {
            let set: Vec<usize> = (0..distances.len())
                .filter(|&i| i != center && distances[i] > 0.0 && distances[i] <= r)
                .collect();
            if set.is_empty() {
                Err(Error::InvalidArgument(format!("no grid point within level {r}")))
            } else {
                Ok(set)
            }
        })
        .collect()
}

/// sup over 0 < dist ≤ r of |v − v(center)| / (dist √(log log 1/dist)).
pub fn local_modulus_statistic(
    e: &Ensemble,
    center: usize,
    distances: &[f64],
    levels: &[f64],
    metric: Metric,
    reference_band: Option<(f64, f64)>,
    exec: Execution,
) -> Result<ModulusReport> {
    check_grid(e, center, distances)?;
    check_levels(levels)?;
    let sets = level_sets(distances, center, levels)?;
    let norm: Vec<f64> = distances
        .iter()
        .map(|&d| if d > 0.0 && d < MAX_LEVEL { d * (1.0 / d).ln().ln().sqrt() } else { f64::NAN })
        .collect();
    let per_path = exec.map(e.n_paths(), |p| {
        let c = e.values[(p, center)];
        sets.iter()
            .map(|set| set.iter().map(|&i| (e.values[(p, i)] - c).abs() / norm[i]).fold(0.0, f64::max))
            .collect::<Vec<f64>>()
    });
    let band = reference_band.or(match metric {
        Metric::Canonical => Some((std::f64::consts::SQRT_2, std::f64::consts::SQRT_2)),
        Metric::Delta => None,
    });
    let counts = sets.iter().map(Vec::len).collect();
    Ok(ModulusReport::assemble("local_modulus", Some(metric), levels, counts, per_path, band))
}

/// sup over pairs with 0 < dist ≤ r of |v(x) − v(y)| / (dist √(log 1/dist)).
pub fn uniform_modulus_statistic(
    e: &Ensemble,
    pairs: &[PointPair],
    levels: &[f64],
    metric: Metric,
    reference_band: Option<(f64, f64)>,
    exec: Execution,
) -> Result<ModulusReport> {
    check_levels(levels)?;
    if let Some(p) = pairs.iter().find(|p| p.i >= e.n_points() || p.j >= e.n_points()) {
        return Err(Error::InvalidArgument(format!("pair ({}, {}) out of range", p.i, p.j)));
    }
    let sets: Vec<Vec<usize>> = levels
        .iter()
        .map(|&r| {
            let s: Vec<usize> = (0..pairs.len())
                .filter(|&k| pairs[k].distance > 0.0 && pairs[k].distance <= r)
                .collect();
            if s.is_empty() {
                Err(Error::InvalidArgument(format!("no pair within level {r}")))
            } else {
                Ok(s)
            }
        })
        .collect::<Result<_>>()?;
    let norm: Vec<f64> = pairs
        .iter()
        .map(|p| p.distance * (1.0 / p.distance).ln().sqrt())
        .collect();
    let per_path = exec.map(e.n_paths(), |p| {
        sets.iter()
            .map(|set| {
                set.iter()
                    .map(|&k| (e.values[(p, pairs[k].i)] - e.values[(p, pairs[k].j)]).abs() / norm[k])
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<f64>>()
    });
    let counts = sets.iter().map(Vec::len).collect();
    Ok(ModulusReport::assemble("uniform_modulus", Some(metric), levels, counts, per_path, reference_band))
}

struct TimeKappa {
    alpha: f64,
}

impl SpectralIntegrand for TimeKappa {
    fn eval(&self, tau: f64, xi: &[f64]) -> Complex<f64> {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let num = 4.0 * (0.5 * tau).sin().powi(2);
        Complex::new(num / (tau * tau + r2.powf(self.alpha)), 0.0)
    }
    fn tau_envelope(&self, _xi: &[f64]) -> f64 {
        2.0
    }
    fn xi_envelope(&self, tau: f64) -> f64 {
        4.0 * (0.5 * tau).sin().powi(2)
    }
    fn xi_envelope_mean(&self) -> f64 {
        2.0
    }
    fn is_radial(&self) -> bool {
        true
    }
}

struct SpaceKappa {
    alpha: f64,
    origin: f64,
}

impl SpectralIntegrand for SpaceKappa {
    fn eval(&self, tau: f64, xi: &[f64]) -> Complex<f64> {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let num = 4.0 * (0.5 * xi[0]).sin().powi(2);
        Complex::new(num / (tau * tau + r2.powf(self.alpha)), 0.0)
    }
    fn tau_envelope(&self, xi: &[f64]) -> f64 {
        4.0 * (0.5 * xi[0]).sin().powi(2)
    }
    fn xi_envelope(&self, _tau: f64) -> f64 {
        2.0
    }
    fn xi_envelope_mean(&self) -> f64 {
        2.0
    }
    fn origin_exponent(&self) -> Option<f64> {
        Some(self.origin)
    }
}

fn kappa_from(r: IntegralResult) -> IntegralResult {
    let value = (2.0 * r.value).sqrt();
    IntegralResult {
        value,
        error_estimate: if value > 0.0 { r.error_estimate / value } else { r.error_estimate },
        ..r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaQuadrature {
    /// Time kernels in closed (or σ) form, then one radial integral.
    Radial,
    /// Adaptive two-dimensional quadrature in the given order.
    Spectral(SpectralOrder),
}

/// κ₅: ‖u(t₀ + s, x₀) − u(t₀, x₀)‖ ≈ κ₅ |s|^{θ₁} (up to the √2 noted in the README).
pub fn lil_constant_time(model: &SpdeModel, spec: &QuadratureSpec, method: KappaQuadrature) -> Result<IntegralResult> {
    match method {
        KappaQuadrature::Radial => {
            let q = stationary_step_mass(model, spec, false)?;
            Ok(kappa_from(IntegralResult::from_quad(q, "radial kernel form")))
        }
        KappaQuadrature::Spectral(order) => {
            let f = TimeKappa { alpha: model.alpha };
            weighted_spectral_integral(&f, model, spec, order).map(kappa_from)
        }
    }
}

/// κ₆: the spatial analog along the first coordinate axis.
pub fn lil_constant_space(model: &SpdeModel, spec: &QuadratureSpec, method: KappaQuadrature) -> Result<IntegralResult> {
    match method {
        KappaQuadrature::Radial => {
            let q = stationary_step_mass(model, spec, true)?;
            Ok(kappa_from(IntegralResult::from_quad(q, "radial kernel form")))
        }
        KappaQuadrature::Spectral(order) => {
            let d = model.dim as f64;
            let f = SpaceKappa {
                alpha: model.alpha,
                origin: d + 1.0 - model.beta - 2.0 * model.alpha * model.hurst,
            };
            weighted_spectral_integral(&f, model, spec, order).map(kappa_from)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LilConstants {
    pub kappa5: f64,
    pub kappa5_error: f64,
    pub kappa6: f64,
    pub kappa6_error: f64,
    /// Values from the two-dimensional ξ-outer quadrature.
    pub kappa5_check: f64,
    pub kappa6_check: f64,
    /// Relative disagreement between the two quadratures.
    pub kappa5_method_gap: f64,
    pub kappa6_method_gap: f64,
}

/// κ₅ and κ₆ from the radial kernel form, each checked against the
/// two-dimensional quadrature run at rel_tol ≥ 1e-4.
pub fn lil_constants(model: &SpdeModel, spec: &QuadratureSpec) -> Result<LilConstants> {
    let check = KappaQuadrature::Spectral(SpectralOrder::XiOuter);
    let loose = QuadratureSpec {
        rel_tol: spec.rel_tol.max(1e-4),
        ..spec.clone()
    };
    let k5 = lil_constant_time(model, spec, KappaQuadrature::Radial)?;
    let k5b = lil_constant_time(model, &loose, check)?;
    let k6 = lil_constant_space(model, spec, KappaQuadrature::Radial)?;
    let k6b = lil_constant_space(model, &loose, check)?;
    Ok(LilConstants {
        kappa5: k5.value,
        kappa5_error: k5.error_estimate,
        kappa6: k6.value,
        kappa6_error: k6.error_estimate,
        kappa5_check: k5b.value,
        kappa6_check: k6b.value,
        kappa5_method_gap: (k5.value - k5b.value).abs() / k5.value,
        kappa6_method_gap: (k6.value - k6b.value).abs() / k6.value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Time,
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LilRatio {
    pub s: f64,
    /// d / |s|^θ.
    pub ratio: f64,
    /// √2 · ratio, the quantity that tends to κ₅ (or κ₆).
    pub scaled_ratio: f64,
}

/// d((t₀+s, x₀), (t₀, x₀)) / s^{θ₁} or d((t₀, x₀+s e₁), (t₀, x₀)) / s^{θ₂}.
pub fn lil_ratio_convergence(
    model: &SpdeModel,
    base: &Point,
    s_values: &[f64],
    direction: Direction,
    spec: &QuadratureSpec,
    exec: Execution,
) -> Result<Vec<LilRatio>> {
    let fm: FieldModel = model.clone().into();
    base.check_for(&fm)?;
    if s_values.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("increments must be positive".into()));
    }
    let theta = match direction {
        Direction::Time => model.theta1(),
        Direction::Space => model.theta2(),
    };
    exec.try_map(s_values.len(), |k| {
        let s = s_values[k];
        let mut c = base.coords.clone();
        match direction {
            Direction::Time => c[0] += s,
            Direction::Space => c[1] += s,
        }
        let d = increment_variance(&fm, &Point::new(c), base, spec)?.sqrt();
        let ratio = d / s.powf(theta);
        Ok(LilRatio {
            s,
            ratio,
            scaled_ratio: std::f64::consts::SQRT_2 * ratio,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub x: f64,
    /// Fraction of |Z| > x.
    pub empirical: f64,
    pub lower: f64,
    pub upper: f64,
    /// Inside [lower, upper] strictly.
    pub inside: bool,
    /// Inside the bounds widened by 2.576 binomial standard errors.
    pub inside_at_1pct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTailReport {
    pub n: usize,
    pub entries: Vec<TailEntry>,
}

impl GaussianTailReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.inside_at_1pct)
    }
}

/// Two-sided Gaussian tail sandwich: 2·(2√(2π)x)^{−1}e^{−x²/2} ≤ P(|Z| > x) ≤ 2·(2π)^{−1/2}e^{−x²/2}.
pub fn tail_bounds(x: f64) -> (f64, f64) {
    let g = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (g / x, 2.0 * g)
}

pub const MIN_TAIL_SAMPLES: usize = 10_000;

pub fn gaussian_tail_check(samples: &[f64]) -> Result<GaussianTailReport> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "tail check needs at least {MIN_TAIL_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let entries = [1.0, 2.0, 3.0]
        .iter()
        .map(|&x| {
            let k = samples.iter().filter(|z| z.abs() > x).count();
            let p = k as f64 / n as f64;
            let (lower, upper) = tail_bounds(x);
            let slack = 2.576 * (p.max(lower) * (1.0 - p.max(lower)) / n as f64).sqrt();
            TailEntry {
                x,
                empirical: p,
                lower,
                upper,
                inside: lower <= p && p <= upper,
                inside_at_1pct: lower - slack <= p && p <= upper + slack,
            }
        })
        .collect();
    Ok(GaussianTailReport { n, entries })
}

/// Standardized increments v(i) − v(j) over the paths of an ensemble.
pub fn standardized_increments(e: &Ensemble, i: usize, j: usize, variance: f64) -> Result<Vec<f64>> {
    if !(variance > 0.0) || i >= e.n_points() || j >= e.n_points() {
        return Err(Error::InvalidArgument("invalid increment specification".into()));
    }
    let sd = variance.sqrt();
    Ok((0..e.n_paths()).map(|p| (e.values[(p, i)] - e.values[(p, j)]) / sd).collect())
}

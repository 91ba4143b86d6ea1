use serde::{Deserialize, Serialize};

use super::{band_increment_variance, conditional_variance, gram, increment_variance, Band};
use crate::error::{Error, Result};
use crate::estimators::{ols_fit, SlopeFit};
use crate::exec::Execution;
use crate::models::{delta_metric, derive_exponents, FieldModel, Point};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScanReport {
    /// Empirical lower constant, min d/Δ.
    pub ratio_min: f64,
    /// Empirical upper constant, max d/Δ.
    pub ratio_max: f64,
    pub ratios: Vec<f64>,
}

pub fn metric_equivalence_scan(
    model: &FieldModel,
    pairs: &[(Point, Point)],
    spec: &QuadratureSpec,
    exec: Execution,
) -> Result<MetricScanReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty pair list".into()));
    }
    let exps = derive_exponents(model)?;
    let ratios = exec.try_map(pairs.len(), |i| {
        let (p, q) = &pairs[i];
        let delta = delta_metric(p, q, &exps)?;
        if delta == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "pair {} / {} has zero Δ-distance",
                p.label(),
                q.label()
            )));
        }
        Ok(increment_variance(model, p, q, spec)?.sqrt() / delta)
    })?;
    let ratio_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_max = ratios.iter().copied().fold(0.0, f64::max);
    Ok(MetricScanReport {
        ratio_min,
        ratio_max,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LndConfiguration {
    pub target: Point,
    pub conditioning: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LndRatio {
    pub conditional_variance: f64,
    /// min over the conditioning points of Δ(target, ·).
    pub min_delta: f64,
    /// Same minimum with the origin added to the conditioning points.
    pub min_delta_with_origin: f64,
    pub ratio: f64,
    pub ratio_with_origin: f64,
}

pub fn strong_lnd_scan(
    model: &FieldModel,
    configurations: &[LndConfiguration],
    spec: &QuadratureSpec,
    exec: Execution,
) -> Result<Vec<LndRatio>> {
    let exps = derive_exponents(model)?;
    let origin = Point::new(vec![0.0; model.point_dim()]);
    configurations
        .iter()
        .map(|c| {
            if c.conditioning.is_empty() {
                return Err(Error::InvalidArgument("empty conditioning set".into()));
            }
            let mut pts = vec![c.target.clone()];
            pts.extend(c.conditioning.iter().cloned());
            let g = gram(model, &pts, spec, exec)?;
            let idx: Vec<usize> = (1..pts.len()).collect();
            let cv = conditional_variance(&g, 0, &idx)?;
            let mut min_delta = f64::INFINITY;
            for p in &c.conditioning {
                min_delta = min_delta.min(delta_metric(&c.target, p, &exps)?);
            }
            if min_delta == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "conditioning set contains the target {}",
                    c.target.label()
                )));
            }
            let min_delta_with_origin = min_delta.min(delta_metric(&c.target, &origin, &exps)?);
            Ok(LndRatio {
                conditional_variance: cv,
                min_delta,
                min_delta_with_origin,
                ratio: cv / (min_delta * min_delta),
                ratio_with_origin: cv / (min_delta_with_origin * min_delta_with_origin),
            })
        })
        .collect()
}

/// Minimum of the two ratio variants: (without origin, with origin).
pub fn empirical_c2(ratios: &[LndRatio]) -> (f64, f64) {
    let lo = ratios.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let lo_origin = ratios
        .iter()
        .map(|r| r.ratio_with_origin)
        .fold(f64::INFINITY, f64::min);
    (lo, lo_origin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowBandReport {
    pub a_values: Vec<f64>,
    /// V([0, a); pair) for each time pair, one row per pair.
    pub time_values: Vec<Vec<f64>>,
    pub space_values: Vec<Vec<f64>>,
    pub time_fits: Vec<SlopeFit>,
    pub space_fits: Vec<SlopeFit>,
}

/// Fits log V([0, a)) against log a for pure-time and pure-space pairs.
pub fn low_band_increment_scan(
    model: &FieldModel,
    a_values: &[f64],
    time_pairs: &[(Point, Point)],
    space_pairs: &[(Point, Point)],
    spec: &QuadratureSpec,
    exec: Execution,
) -> Result<LowBandReport> {
    if a_values.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "low-band scan needs at least 4 band edges, got {}",
            a_values.len()
        )));
    }
    let bands = a_values
        .iter()
        .map(|&a| Band::new(0.0, a))
        .collect::<Result<Vec<_>>>()?;
    let scan = |pairs: &[(Point, Point)]| -> Result<(Vec<Vec<f64>>, Vec<SlopeFit>)> {
        let n = bands.len();
        let flat = exec.try_map(pairs.len() * n, |k| {
            let (p, q) = &pairs[k / n];
            band_increment_variance(model, bands[k % n], p, q, spec)
        })?;
        let rows: Vec<Vec<f64>> = flat.chunks(n).map(<[f64]>::to_vec).collect();
        let lx: Vec<f64> = a_values.iter().map(|a| a.ln()).collect();
        let fits = rows
            .iter()
            .map(|r| ols_fit(&lx, &r.iter().map(|v| v.ln()).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        Ok((rows, fits))
    };
    let (time_values, time_fits) = scan(time_pairs)?;
    let (space_values, space_fits) = scan(space_pairs)?;
    Ok(LowBandReport {
        a_values: a_values.to_vec(),
        time_values,
        space_values,
        time_fits,
        space_fits,
    })
}

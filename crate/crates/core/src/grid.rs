//! Point sets in the Δ geometry: lattices filling a Δ-ball, dyadic Δ-shells
//! around a center, and plain rectangle lattices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{derive_exponents, FieldModel, Point, Rectangle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Tensor lattice restricted to B_Δ(center, radius); the spacing on axis
    /// j is (radius/steps)^{1/e_j}, so each step adds the same Δ.
    DeltaBall { center: Point, radius: f64, steps: usize },
    /// `per_shell` points with Δ-distance in (2^{−k−1}, 2^{−k}] for each k.
    Shells {
        center: Point,
        first: i32,
        last: i32,
        per_shell: usize,
        seed: u64,
    },
    /// Tensor lattice with `counts[j]` points on axis j, endpoints included.
    Rectangle { domain: Rectangle, counts: Vec<usize> },
}

/// Grid points; for ball and shell grids the center comes first.
pub fn build_grid(model: &FieldModel, spec: &GridSpec) -> Result<Vec<Point>> {
    match spec {
        GridSpec::DeltaBall { center, radius, steps } => delta_ball_grid(model, center, *radius, *steps),
        GridSpec::Shells {
            center,
            first,
            last,
            per_shell,
            seed,
        } => shell_grid(model, center, *first, *last, *per_shell, *seed),
        GridSpec::Rectangle { domain, counts } => rectangle_grid(model, domain, counts),
    }
}

fn offset_point(center: &Point, shares: &[f64], exps: &[f64]) -> Point {
    Point::new(
        center
            .coords
            .iter()
            .zip(shares.iter().zip(exps))
            .map(|(c, (a, e))| c + a.signum() * a.abs().powf(1.0 / e))
            .collect(),
    )
}

fn check_domain(model: &FieldModel, pts: &[Point]) -> Result<()> {
    for p in pts {
        p.check_for(model)?;
    }
    Ok(())
}

pub fn delta_ball_grid(model: &FieldModel, center: &Point, radius: f64, steps: usize) -> Result<Vec<Point>> {
    center.check_for(model)?;
    if !(radius > 0.0) || steps == 0 {
        return Err(Error::InvalidArgument("Δ-ball needs a positive radius and step count".into()));
    }
    let exps = derive_exponents(model)?.axis_exponents;
    let k = exps.len();
    // equal Δ-contribution per lattice step on every axis
    let eps = radius / steps as f64;
    let h: Vec<f64> = exps.iter().map(|e| eps.powf(1.0 / e)).collect();
    let reach: Vec<i64> = exps
        .iter()
        .zip(&h)
        .map(|(e, hj)| (radius.powf(1.0 / e) / hj).floor() as i64)
        .collect();
    let mut pts = vec![center.clone()];
    let mut idx: Vec<i64> = reach.iter().map(|r| -r).collect();
    loop {
        if idx.iter().any(|i| *i != 0) {
            let delta: f64 = idx
                .iter()
                .zip(h.iter().zip(&exps))
                .map(|(&i, (hj, e))| (i.abs() as f64 * hj).powf(*e))
                .sum();
            if delta <= radius * (1.0 + 1e-12) {
                pts.push(Point::new(
                    center
                        .coords
                        .iter()
                        .zip(idx.iter().zip(&h))
                        .map(|(c, (&i, hj))| c + i as f64 * hj)
                        .collect(),
                ));
            }
        }
        let mut a = 0;
        loop {
            if a == k {
                check_domain(model, &pts)?;
                return Ok(pts);
            }
            idx[a] += 1;
            if idx[a] > reach[a] {
                idx[a] = -reach[a];
                a += 1;
            } else {
                break;
            }
        }
    }
}

pub fn shell_grid(
    model: &FieldModel,
    center: &Point,
    first: i32,
    last: i32,
    per_shell: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    center.check_for(model)?;
    if last < first || per_shell == 0 {
        return Err(Error::InvalidArgument("empty shell specification".into()));
    }
    let exps = derive_exponents(model)?.axis_exponents;
    let k = exps.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![center.clone()];
    for n in first..=last {
        let outer = 2f64.powi(-n);
        for _ in 0..per_shell {
            let delta = outer * (0.5 + 0.5 * rng.random::<f64>());
            // uniform point on the simplex, random signs
            let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
            cuts.push(0.0);
            cuts.push(1.0);
            cuts.sort_by(f64::total_cmp);
            let shares: Vec<f64> = cuts
                .windows(2)
                .map(|w| {
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    s * (w[1] - w[0]) * delta
                })
                .collect();
            pts.push(offset_point(center, &shares, &exps));
        }
    }
    check_domain(model, &pts)?;
    Ok(pts)
}

pub fn rectangle_grid(model: &FieldModel, domain: &Rectangle, counts: &[usize]) -> Result<Vec<Point>> {
    domain.validate(model)?;
    if counts.len() != domain.lower.dim() || counts.iter().any(|c| *c < 2) {
        return Err(Error::InvalidArgument("rectangle grid needs at least 2 points per axis".into()));
    }
    let total: usize = counts.iter().product();
    let mut pts = Vec::with_capacity(total);
    for mut flat in 0..total {
        let coords = counts
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let i = flat % c;
                flat /= c;
                let (lo, hi) = (domain.lower.coords[j], domain.upper.coords[j]);
                lo + (hi - lo) * i as f64 / (c - 1) as f64
            })
            .collect();
        pts.push(Point::new(coords));
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{delta_metric, SpdeModel};

    fn she() -> FieldModel {
        SpdeModel::default().into()
    }

    #[test]
    fn ball_points_lie_inside() {
        let c = Point::new(vec![1.0, 0.0]);
        let pts = delta_ball_grid(&she(), &c, 0.1, 4).unwrap();
        assert!(pts.len() > 150 && pts.len() < 300, "{}", pts.len());
        let e = derive_exponents(&she()).unwrap();
        for p in &pts {
            assert!(delta_metric(p, &c, &e).unwrap() <= 0.1 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn shells_hit_their_ranges() {
        let c = Point::new(vec![1.0, 0.0]);
        let pts = shell_grid(&she(), &c, 4, 6, 5, 1).unwrap();
        assert_eq!(pts.len(), 16);
        let e = derive_exponents(&she()).unwrap();
        for (i, p) in pts.iter().enumerate().skip(1) {
            let k = 4 + (i as i32 - 1) / 5;
            let d = delta_metric(p, &c, &e).unwrap();
            assert!(d > 2f64.powi(-k - 1) * (1.0 - 1e-12) && d <= 2f64.powi(-k) * (1.0 + 1e-12));
        }
        assert_eq!(pts, shell_grid(&she(), &c, 4, 6, 5, 1).unwrap());
    }

    #[test]
    fn rectangle_lattice() {
        let r = Rectangle::new(vec![0.5, -1.0], vec![1.5, 1.0]);
        let pts = rectangle_grid(&she(), &r, &[3, 5]).unwrap();
        assert_eq!(pts.len(), 15);
        assert_eq!(pts[0].coords, vec![0.5, -1.0]);
        assert_eq!(pts[14].coords, vec![1.5, 1.0]);
    }
}

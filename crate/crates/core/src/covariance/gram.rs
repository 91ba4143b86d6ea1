use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{increment_variance, pair_covariance_detailed};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{FieldModel, Point};
use crate::quadrature::QuadratureSpec;

/// Covariance matrix of the field over a labeled point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gram {
    pub matrix: DMatrix<f64>,
    pub points: Vec<Point>,
    pub labels: Vec<String>,
    pub model_fingerprint: String,
    /// Largest quadrature error estimate among the entries.
    pub max_error: f64,
    /// Smallest eigenvalue found by the PSD check.
    pub min_eigenvalue: f64,
}

/// Maximum number of points accepted by [`gram`].
pub const MAX_POINTS: usize = 2000;

/// Hex SHA-256 of the model, point set and quadrature settings.
pub fn fingerprint(model: &FieldModel, points: &[Point], spec: &QuadratureSpec) -> String {
    let payload = serde_json::json!({ "model": model, "points": points, "spec": spec });
    let mut h = Sha256::new();
    h.update(payload.to_string().as_bytes());
    hex::encode(h.finalize())
}

pub fn gram(model: &FieldModel, points: &[Point], spec: &QuadratureSpec, exec: Execution) -> Result<Gram> {
    let n = points.len();
    if n == 0 || n > MAX_POINTS {
        return Err(Error::InvalidArgument(format!(
            "Gram needs between 1 and {MAX_POINTS} points, got {n}"
        )));
    }
    for p in points {
        p.check_for(model)?;
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let entries = exec.try_map(pairs.len(), |k| {
        let (i, j) = pairs[k];
        pair_covariance_detailed(model, &points[i], &points[j], spec)
    })?;
    let mut matrix = DMatrix::zeros(n, n);
    let mut max_error = 0.0f64;
    for (&(i, j), r) in pairs.iter().zip(&entries) {
        matrix[(i, j)] = r.value;
        matrix[(j, i)] = r.value;
        max_error = max_error.max(r.error_estimate);
    }
    let min_eigenvalue = check_psd(&matrix)?;
    Ok(Gram {
        matrix,
        labels: points.iter().map(Point::label).collect(),
        points: points.to_vec(),
        model_fingerprint: fingerprint(model, points, spec),
        max_error,
        min_eigenvalue,
    })
}

/// Matrix of increment variances d(p_i, p_j)², upper triangle computed.
pub fn variogram(model: &FieldModel, points: &[Point], spec: &QuadratureSpec, exec: Execution) -> Result<DMatrix<f64>> {
    let n = points.len();
    if n == 0 || n > MAX_POINTS {
        return Err(Error::InvalidArgument(format!(
            "variogram needs between 1 and {MAX_POINTS} points, got {n}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals = exec.try_map(pairs.len(), |k| {
        let (i, j) = pairs[k];
        increment_variance(model, &points[i], &points[j], spec)
    })?;
    let mut m = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}

/// Gram of the increments v(p_i) − v(p_anchor), assembled from a variogram
/// as ½(d²(i, a) + d²(j, a) − d²(i, j)).
pub fn increment_gram(
    model: &FieldModel,
    points: &[Point],
    anchor: usize,
    variogram: &DMatrix<f64>,
    spec: &QuadratureSpec,
) -> Result<Gram> {
    let n = points.len();
    if variogram.nrows() != n || variogram.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: variogram.nrows(),
        });
    }
    if anchor >= n {
        return Err(Error::InvalidArgument("anchor index out of range".into()));
    }
    let a = anchor;
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            variogram[(i, a)]
        } else {
            0.5 * (variogram[(i, a)] + variogram[(j, a)] - variogram[(i, j)])
        }
    });
    let min_eigenvalue = check_psd(&matrix)?;
    let mut fp_points = vec![points[a].clone()];
    fp_points.extend(points.iter().cloned());
    Ok(Gram {
        matrix,
        labels: points.iter().map(Point::label).collect(),
        points: points.to_vec(),
        model_fingerprint: fingerprint(model, &fp_points, spec),
        max_error: 0.0,
        min_eigenvalue,
    })
}

fn check_psd(m: &DMatrix<f64>) -> Result<f64> {
    let trace = m.trace();
    if m.diagonal().iter().any(|d| *d < 0.0) {
        return Err(Error::NotPsd {
            worst: m.diagonal().min(),
            tolerance: 0.0,
        });
    }
    let eig = SymmetricEigen::new(m.clone());
    let worst = eig.eigenvalues.min();
    let tolerance = -1e-8 * trace;
    if worst < tolerance {
        return Err(Error::NotPsd { worst, tolerance });
    }
    Ok(worst)
}

impl Gram {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row-major CSV with the point labels as header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.labels.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = (0..self.len()).map(|j| format!("{:e}", self.matrix[(i, j)])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Gram restricted to the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Gram {
        let m = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])]);
        Gram {
            matrix: m,
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            model_fingerprint: self.model_fingerprint.clone(),
            max_error: self.max_error,
            min_eigenvalue: self.min_eigenvalue,
        }
    }
}

/// Var(v(target) | v(conditioning)) as a Schur complement.
pub fn conditional_variance(g: &Gram, target: usize, conditioning: &[usize]) -> Result<f64> {
    conditional_variance_matrix(&g.matrix, target, conditioning)
}

/// Schur complement g_tt − g_tS g_SS⁺ g_St with a pseudo-inverse that drops
/// eigenvalues below 1e-10·λ_max; clamped at zero.
pub fn conditional_variance_matrix(g: &DMatrix<f64>, target: usize, conditioning: &[usize]) -> Result<f64> {
    let n = g.nrows();
    if target >= n || conditioning.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument("index out of range".into()));
    }
    let var = g[(target, target)];
    if conditioning.contains(&target) {
        return Ok(0.0);
    }
    if conditioning.is_empty() {
        return Ok(var.max(0.0));
    }
    let m = conditioning.len();
    let s = DMatrix::from_fn(m, m, |i, j| g[(conditioning[i], conditioning[j])]);
    let b = nalgebra::DVector::from_fn(m, |i, _| g[(conditioning[i], target)]);
    let eig = SymmetricEigen::new(s);
    let lmax = eig.eigenvalues.max();
    if lmax <= 0.0 {
        return Ok(var.max(0.0));
    }
    let cut = 1e-10 * lmax;
    let proj = eig.eigenvectors.transpose() * &b;
    let mut reduction = 0.0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut {
            reduction += proj[k] * proj[k] / l;
        }
    }
    Ok((var - reduction).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::SpdeModel;

    #[test]
    fn two_point_conditioning_matches_closed_form() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.5]);
        let v = conditional_variance_matrix(&g, 0, &[1]).unwrap();
        assert!((v - (2.0 - 0.36 / 1.5)).abs() < 1e-14);
        assert_eq!(conditional_variance_matrix(&g, 0, &[]).unwrap(), 2.0);
    }

    #[test]
    fn duplicate_point_gives_zero() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.2, 1.0, 1.0, 0.2, 0.2, 0.2, 1.0]);
        let v = conditional_variance_matrix(&g, 0, &[1, 2]).unwrap();
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn single_point_gram_and_permutation() {
        let m: FieldModel = SpdeModel::default().into();
        let spec = QuadratureSpec::default();
        let pts = vec![
            Point::new(vec![1.0, 0.0]),
            Point::new(vec![0.5, 0.3]),
            Point::new(vec![0.9, -0.4]),
        ];
        let g1 = gram(&m, &pts[..1], &spec, Execution::Sequential).unwrap();
        assert_eq!(g1.len(), 1);
        assert!(g1.matrix[(0, 0)] > 0.0);
        let g = gram(&m, &pts, &spec, Execution::default()).unwrap();
        let perm = [2, 0, 1];
        let shuffled: Vec<Point> = perm.iter().map(|&i| pts[i].clone()).collect();
        let gp = gram(&m, &shuffled, &spec, Execution::Sequential).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(gp.matrix[(i, j)], g.matrix[(perm[i], perm[j])]);
            }
        }
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("(1;0),(0.5;0.3)"));
    }
}

//! Exact Gaussian ensembles from a Gram matrix.
//!
//! Path `i` draws its normals from a ChaCha8 stream keyed by the master seed
//! with stream number `i`, so an ensemble never depends on scheduling.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::Gram;
use crate::error::{Error, Result};
use crate::exec::Execution;

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    /// Absolute jitter added to the diagonal (0 when none was needed).
    pub jitter_applied: f64,
    pub labels: Vec<String>,
    pub fingerprint: String,
}

impl CholeskyFactor {
    pub fn n_points(&self) -> usize {
        self.lower.nrows()
    }

    /// ‖L Lᵀ − (G + jitter·I)‖_F / ‖G + jitter·I‖_F, the jitter counted on
    /// non-zero rows only.
    pub fn reconstruction_error(&self, g: &DMatrix<f64>) -> f64 {
        let mut target = g.clone();
        for i in 0..g.nrows() {
            if g.row(i).iter().any(|v| *v != 0.0) {
                target[(i, i)] += self.jitter_applied;
            }
        }
        let norm = target.norm();
        let diff = (&self.lower * self.lower.transpose() - &target).norm();
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }
}

pub fn cholesky_factor(g: &Gram) -> Result<CholeskyFactor> {
    let (lower, jitter_applied) = factor_matrix(&g.matrix)?;
    Ok(CholeskyFactor {
        lower,
        jitter_applied,
        labels: g.labels.clone(),
        fingerprint: g.model_fingerprint.clone(),
    })
}

/// Cholesky with escalating diagonal jitter; returns (L, jitter).
///
/// Rows and columns that are identically zero (a point where the field
/// vanishes) are factored out and get zero rows in L.
pub fn factor_matrix(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidArgument("Gram matrix is not square".into()));
    }
    let live: Vec<usize> = (0..n).filter(|&i| m.row(i).iter().any(|v| *v != 0.0)).collect();
    let k = live.len();
    let sub = DMatrix::from_fn(k, k, |i, j| m[(live[i], live[j])]);
    let (l, jitter) = factor_dense(&sub)?;
    let mut full = DMatrix::zeros(n, n);
    for (a, &i) in live.iter().enumerate() {
        for (b, &j) in live.iter().enumerate().take(a + 1) {
            full[(i, j)] = l[(a, b)];
        }
    }
    Ok((full, jitter))
}

fn factor_dense(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c.l(), 0.0));
    }
    let scale = m.trace() / n as f64;
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let shifted = m + DMatrix::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(shifted) {
            return Ok((c.l(), jitter));
        }
        rel *= 10.0;
    }
    Err(Error::Cholesky {
        jitter: JITTER_MAX * scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    /// n_paths × n_points; row i is one realization.
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
    pub master_seed: u64,
    pub model_fingerprint: String,
}

fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub fn sample_ensemble(f: &CholeskyFactor, n_paths: usize, master_seed: u64, exec: Execution) -> Result<Ensemble> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let n = f.n_points();
    let rows = exec.map(n_paths, |i| {
        let mut rng = path_rng(master_seed, i as u64);
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        &f.lower * z
    });
    let values = DMatrix::from_fn(n_paths, n, |i, j| rows[i][j]);
    Ok(Ensemble {
        values,
        labels: f.labels.clone(),
        master_seed,
        model_fingerprint: f.fingerprint.clone(),
    })
}

impl Ensemble {
    pub fn n_paths(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    pub fn path(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// One row per path, header = point labels.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.labels.join(","))?;
        for row in self.values.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Binary layout, all little-endian:
    ///
    /// | bytes | content |
    /// |---|---|
    /// | 8 | magic `ANIFENS1` |
    /// | 8 | n_paths (u64) |
    /// | 8 | n_points (u64) |
    /// | 8 | master seed (u64) |
    /// | 8 | fingerprint length L (u64) |
    /// | L | fingerprint, UTF-8 |
    /// | 8·n_paths·n_points | values, row-major f64 |
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            self.n_paths() as u64,
            self.n_points() as u64,
            self.master_seed,
            self.model_fingerprint.len() as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(self.model_fingerprint.as_bytes())?;
        for row in self.values.row_iter() {
            for v in row.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads the binary layout of [`Ensemble::write_binary`]; labels are not
    /// stored and come back as column indices.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Ensemble> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidArgument("not an ensemble file".into()));
        }
        let mut word = || -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let n_paths = word()? as usize;
        let n_points = word()? as usize;
        let master_seed = word()?;
        let flen = word()? as usize;
        let mut fp = vec![0u8; flen];
        r.read_exact(&mut fp)?;
        let model_fingerprint =
            String::from_utf8(fp).map_err(|_| Error::InvalidArgument("fingerprint is not UTF-8".into()))?;
        let mut data = vec![0u8; 8 * n_paths * n_points];
        r.read_exact(&mut data)?;
        let vals: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Ensemble {
            values: DMatrix::from_row_slice(n_paths, n_points, &vals),
            labels: (0..n_points).map(|j| j.to_string()).collect(),
            master_seed,
            model_fingerprint,
        })
    }
}

const MAGIC: &[u8; 8] = b"ANIFENS1";

/// Unbiased sample covariance of the columns.
pub fn empirical_cov(e: &Ensemble) -> Result<DMatrix<f64>> {
    let n = e.n_paths();
    if n < 2 {
        return Err(Error::InvalidArgument("empirical covariance needs at least 2 paths".into()));
    }
    let mean = e.values.row_mean();
    let mut centered = e.values.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    Ok(centered.transpose() * &centered / (n as f64 - 1.0))
}

/// Kolmogorov–Smirnov statistic of `xs` against N(0, var).
pub fn ks_statistic(xs: &[f64], var: f64) -> Result<f64> {
    if xs.is_empty() || !(var > 0.0) {
        return Err(Error::InvalidArgument("KS test needs data and a positive variance".into()));
    }
    let normal = Normal::new(0.0, var.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter()
        .enumerate()
        .map(|(i, x)| {
            let c = normal.cdf(*x);
            (c - i as f64 / n).max((i as f64 + 1.0) / n - c)
        })
        .fold(0.0, f64::max))
}

/// Asymptotic KS critical value at significance `level` (0.01 → 1.628/√n).
pub fn ks_critical(n: usize, level: f64) -> f64 {
    (-0.5 * (level / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub statistics: Vec<f64>,
    pub critical_1pct: f64,
    pub critical_01pct: f64,
    /// Points whose statistic exceeds the 1% value.
    pub flagged: Vec<usize>,
    /// Points whose statistic exceeds the 0.1% value.
    pub failed: Vec<usize>,
}

/// Per-point KS check of the ensemble against N(0, diag(Gram)).
pub fn marginal_normality(e: &Ensemble, g: &DMatrix<f64>) -> Result<MarginalCheck> {
    let n = e.n_paths();
    let mut statistics = Vec::with_capacity(e.n_points());
    for j in 0..e.n_points() {
        let col: Vec<f64> = e.values.column(j).iter().copied().collect();
        statistics.push(ks_statistic(&col, g[(j, j)])?);
    }
    let c1 = ks_critical(n, 0.01);
    let c01 = ks_critical(n, 0.001);
    Ok(MarginalCheck {
        flagged: (0..statistics.len()).filter(|&j| statistics[j] > c1).collect(),
        failed: (0..statistics.len()).filter(|&j| statistics[j] > c01).collect(),
        statistics,
        critical_1pct: c1,
        critical_01pct: c01,
    })
}

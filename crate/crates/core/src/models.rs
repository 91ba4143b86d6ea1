//! Field families, anisotropy exponents, the Δ metric and noise constants.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Solution of the fractional-colored stochastic heat equation with
/// generator symbol Ψ(ξ) = |ξ|^α and spectral density h(ξ) = |ξ|^{-β}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeModel {
    pub alpha: f64,
    pub beta: f64,
    pub hurst: f64,
    pub dim: usize,
    /// Two-sided bounds (c, C) on Ψ(ξ)/|ξ|^α. Metadata only: the
    /// covariance engine always uses the power-law representative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_scale: Option<(f64, f64)>,
    /// Two-sided bounds (c, C) on h(ξ)|ξ|^β. Metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_scale: Option<(f64, f64)>,
}

impl SpdeModel {
    pub fn new(alpha: f64, beta: f64, hurst: f64, dim: usize) -> Self {
        Self {
            alpha,
            beta,
            hurst,
            dim,
            psi_scale: None,
            density_scale: None,
        }
    }

    fn check_ranges(&self) -> Vec<(String, bool, String)> {
        let d = self.dim as f64;
        let mut out = vec![
            (
                "dimension".to_string(),
                self.dim == 1 || self.dim == 2,
                format!("dim = {} (supported: 1, 2)", self.dim),
            ),
            (
                "alpha range".to_string(),
                self.alpha > 0.0 && self.alpha <= 2.0,
                format!("0 < alpha <= 2 with alpha = {}", self.alpha),
            ),
            (
                "beta range".to_string(),
                self.beta > 0.0 && self.beta < d,
                format!("0 < beta < d with beta = {}, d = {}", self.beta, self.dim),
            ),
            (
                "hurst range".to_string(),
                (0.5..1.0).contains(&self.hurst),
                format!("1/2 <= H < 1 with H = {}", self.hurst),
            ),
        ];
        for (name, pair) in [("psi_scale", self.psi_scale), ("density_scale", self.density_scale)] {
            if let Some((lo, hi)) = pair {
                out.push((
                    name.to_string(),
                    lo > 0.0 && lo <= hi && hi.is_finite(),
                    format!("0 < {lo} <= {hi}"),
                ));
            }
        }
        out
    }

    pub fn theta1(&self) -> f64 {
        self.hurst - (self.dim as f64 - self.beta) / (2.0 * self.alpha)
    }

    pub fn theta2(&self) -> f64 {
        self.alpha * self.theta1()
    }
}

impl Default for SpdeModel {
    fn default() -> Self {
        Self::new(2.0, 0.5, 0.5, 1)
    }
}

/// Field with stationary-free increments built from ∏(e^{i x_j ξ_j} − 1)
/// against noise with density (Σ|ξ_j|^{α_j})^{-(Q+2)}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductModel {
    pub alphas: Vec<f64>,
    #[serde(default = "unit_bounds")]
    pub density_bounds: (f64, f64),
}

fn unit_bounds() -> (f64, f64) {
    (1.0, 1.0)
}

impl ProductModel {
    pub fn new(alphas: Vec<f64>) -> Self {
        Self {
            alphas,
            density_bounds: unit_bounds(),
        }
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn big_q(&self) -> f64 {
        self.alphas.iter().map(|a| 1.0 / a).sum()
    }

    fn check_ranges(&self) -> Vec<(String, bool, String)> {
        let k = self.k();
        let mut out = vec![(
            "dimension".to_string(),
            (1..=3).contains(&k),
            format!("k = {k} (supported: 1, 2, 3)"),
        )];
        for (j, a) in self.alphas.iter().enumerate() {
            out.push((
                format!("alpha[{j}] range"),
                *a > 0.0 && *a < 1.0,
                format!("0 < alpha_{j} < 1 with alpha_{j} = {a}"),
            ));
        }
        let (c1, c2) = self.density_bounds;
        out.push((
            "density bounds".to_string(),
            c1 > 0.0 && c1 <= c2 && c2.is_finite(),
            format!("0 < C1 = {c1} <= C2 = {c2}"),
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FieldModel {
    Spde(SpdeModel),
    Product(ProductModel),
}

impl FieldModel {
    /// Number of coordinates of a point in the model's index set.
    pub fn point_dim(&self) -> usize {
        match self {
            FieldModel::Spde(m) => m.dim + 1,
            FieldModel::Product(m) => m.k(),
        }
    }
}

impl From<SpdeModel> for FieldModel {
    fn from(m: SpdeModel) -> Self {
        FieldModel::Spde(m)
    }
}

impl From<ProductModel> for FieldModel {
    fn from(m: ProductModel) -> Self {
        FieldModel::Product(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    /// Time exponent (SPDE only).
    pub theta1: Option<f64>,
    /// Space exponent (SPDE only).
    pub theta2: Option<f64>,
    /// Band-growth exponents: (γ₁, γ₂) for SPDE models, one per axis for
    /// product models.
    pub gamma: Vec<f64>,
    pub big_q: f64,
    /// Exponent applied to each coordinate difference by Δ.
    pub axis_exponents: Vec<f64>,
}

impl Exponents {
    pub fn gamma1(&self) -> f64 {
        self.gamma[0]
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma[1]
    }
}

pub fn derive_exponents(model: &FieldModel) -> Result<Exponents> {
    match model {
        FieldModel::Spde(m) => {
            if let Some((name, _, detail)) = m.check_ranges().into_iter().find(|c| !c.1) {
                return Err(Error::InvalidModel(format!("{name}: {detail}")));
            }
            let t1 = m.theta1();
            let t2 = m.theta2();
            if t1 <= 0.0 {
                return Err(Error::ExponentCondition(format!(
                    "theta1 > 0 violated: theta1 = H - (d - beta)/(2 alpha) = {t1}"
                )));
            }
            if t2 >= 1.0 {
                return Err(Error::ExponentCondition(format!(
                    "theta2 < 1 violated: theta2 = alpha * theta1 = {t2}"
                )));
            }
            let d = m.dim;
            let mut axis = vec![t1];
            axis.extend(std::iter::repeat_n(t2, d));
            Ok(Exponents {
                theta1: Some(t1),
                theta2: Some(t2),
                gamma: vec![1.0 / t1 - 1.0, 1.0 / t2 - 1.0],
                big_q: 1.0 / t1 + d as f64 / t2,
                axis_exponents: axis,
            })
        }
        FieldModel::Product(m) => {
            if let Some((name, _, detail)) = m.check_ranges().into_iter().find(|c| !c.1) {
                return Err(Error::InvalidModel(format!("{name}: {detail}")));
            }
            Ok(Exponents {
                theta1: None,
                theta2: None,
                gamma: m.alphas.iter().map(|a| 1.0 / a - 1.0).collect(),
                big_q: m.big_q(),
                axis_exponents: m.alphas.clone(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn validate_model(model: &FieldModel) -> ValidationReport {
    let mut checks: Vec<AssumptionCheck> = Vec::new();
    let mut push = |name: String, passed: bool, detail: String| {
        checks.push(AssumptionCheck { name, passed, detail })
    };
    match model {
        FieldModel::Spde(m) => {
            for (n, p, d) in m.check_ranges() {
                push(n, p, d);
            }
            let d = m.dim as f64;
            let bound = d - 2.0 * m.alpha * m.hurst;
            push(
                "existence".into(),
                m.beta > bound,
                format!("beta > d - 2 alpha H: {} > {}", m.beta, bound),
            );
            let t1 = m.theta1();
            let t2 = m.theta2();
            push("theta1 > 0".into(), t1 > 0.0, format!("theta1 = {t1}"));
            push("theta2 < 1".into(), t2 < 1.0, format!("theta2 = {t2}"));
        }
        FieldModel::Product(m) => {
            for (n, p, d) in m.check_ranges() {
                push(n, p, d);
            }
            let q = m.big_q();
            push(
                "Q > k".into(),
                q.is_finite() && q > m.k() as f64,
                format!("Q = {q}, k = {}", m.k()),
            );
        }
    }
    ValidationReport { checks }
}

/// A point in the index set: (t, x₁, …, x_d) for SPDE models, (x₁, …, x_k)
/// for product models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn spacetime(t: f64, x: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(x.len() + 1);
        coords.push(t);
        coords.extend_from_slice(x);
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Time coordinate of a space-time point.
    pub fn time(&self) -> f64 {
        self.coords[0]
    }

    /// Spatial part of a space-time point.
    pub fn space(&self) -> &[f64] {
        &self.coords[1..]
    }

    pub fn label(&self) -> String {
        let parts: Vec<String> = self.coords.iter().map(|c| format!("{c}")).collect();
        format!("({})", parts.join(";"))
    }

    pub fn check_for(&self, model: &FieldModel) -> Result<()> {
        let expected = model.point_dim();
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        if self.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in {}",
                self.label()
            )));
        }
        if matches!(model, FieldModel::Spde(_)) && self.time() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "time coordinate must be positive, got {}",
                self.time()
            )));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lower: Point,
    pub upper: Point,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower: Point::new(lower),
            upper: Point::new(upper),
        }
    }

    pub fn validate(&self, model: &FieldModel) -> Result<()> {
        let n = model.point_dim();
        for p in [&self.lower, &self.upper] {
            if p.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.dim(),
                });
            }
        }
        for (i, (lo, hi)) in self.lower.coords.iter().zip(&self.upper.coords).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "rectangle axis {i}: lower {lo} must be below upper {hi}"
                )));
            }
        }
        match model {
            FieldModel::Spde(_) => {
                if self.lower.time() <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "rectangle must start at a positive time".into(),
                    ));
                }
            }
            FieldModel::Product(_) => {
                for (i, (lo, hi)) in self.lower.coords.iter().zip(&self.upper.coords).enumerate() {
                    if *lo <= 0.0 && *hi >= 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "rectangle touches the hyperplane x_{i} = 0"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.coords
            .iter()
            .zip(self.lower.coords.iter().zip(&self.upper.coords))
            .all(|(c, (lo, hi))| lo <= c && c <= hi)
    }

    pub fn midpoint(&self) -> Point {
        Point::new(
            self.lower
                .coords
                .iter()
                .zip(&self.upper.coords)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
    }
}

pub fn delta_metric(p: &Point, q: &Point, exps: &Exponents) -> Result<f64> {
    let n = exps.axis_exponents.len();
    for x in [p, q] {
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.dim(),
            });
        }
    }
    Ok(p.coords
        .iter()
        .zip(&q.coords)
        .zip(&exps.axis_exponents)
        .map(|((a, b), e)| {
            let h = (a - b).abs();
            if h == 0.0 {
                0.0
            } else {
                h.powf(*e)
            }
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConstants {
    pub a_h: f64,
    pub b_h: f64,
    pub c_hd: f64,
}

pub fn noise_constants(h: f64, d: usize) -> Result<NoiseConstants> {
    if !(0.5..1.0).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "Hurst index must lie in [1/2, 1), got {h}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let a_h = h * (2.0 * h - 1.0);
    let b_h = if h == 0.5 {
        1.0 / two_pi
    } else {
        a_h * gamma(h - 0.5)
            / (2f64.powf(2.0 * (1.0 - h)) * std::f64::consts::PI.sqrt() * gamma(1.0 - h))
    };
    Ok(NoiseConstants {
        a_h,
        b_h,
        c_hd: b_h * two_pi.powi(-(d as i32)),
    })
}

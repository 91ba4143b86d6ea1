//! Run configuration, read from JSON.

use std::path::{Path, PathBuf};

use aniso_field::grid::GridSpec;
use aniso_field::{FieldModel, Point, QuadratureSpec, Rectangle};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: FieldModel,
    #[serde(default)]
    pub domain: Option<Rectangle>,
    pub grid: GridSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Also write the ensemble as CSV (the binary file is always written).
    pub write_csv: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_paths: 2000,
            master_seed: 1,
            write_csv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub small_ball: Option<SmallBallConfig>,
    pub chung: Option<ChungConfig>,
    pub modulus: Option<ModulusConfig>,
    pub lilconst: Option<LilConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallConfig {
    /// (r, u) pairs, r in Δ units.
    pub levels: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChungConfig {
    /// Strictly decreasing radii below 0.1.
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusConfig {
    pub levels: Vec<f64>,
    pub metric: aniso_field::estimators::Metric,
    #[serde(default = "yes")]
    pub uniform: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilConfig {
    pub base: Point,
    /// Decreasing increments for the ratio-convergence check.
    pub s_values: Vec<f64>,
}

#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    Parse(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(m) | ConfigError::Parse(m) => f.write_str(m),
        }
    }
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}:{m}", path.display())),
        read => read,
    })
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text)
        .map_err(|e| ConfigError::Parse(format!("{}:{}: {e}", e.line(), e.column())))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::Parse(format!(
            "schema_version: expected {SCHEMA_VERSION}, got {}",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

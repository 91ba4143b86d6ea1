//! Run report written as `report.json`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Acceptance criterion the check belongs to.
    pub criterion: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageReport {
    pub verdicts: Vec<Verdict>,
    pub outputs: Vec<String>,
    pub data: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasuredConstants {
    /// max d/Δ over grid pairs with the center.
    pub c1: Option<f64>,
    /// Conditional-variance constant at the grid center.
    pub c2: Option<f64>,
    /// min d/Δ over grid pairs with the center.
    pub c3: Option<f64>,
}

/// Everything that is not reproducible from the config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub wall_clock_seconds: BTreeMap<String, f64>,
    pub threads: Option<usize>,
    pub finished_unix_seconds: u64,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub software_version: String,
    pub command: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageReport>,
    pub constants: MeasuredConstants,
    pub passed: bool,
    /// Set when a stage aborted with a validation or numerical error.
    pub error: Option<String>,
    pub metadata: Metadata,
}

impl RunReport {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Self {
            schema_version: crate::config::SCHEMA_VERSION,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            stages: BTreeMap::new(),
            constants: MeasuredConstants::default(),
            passed: true,
            error: None,
            metadata: Metadata::default(),
        }
    }

    pub fn add(&mut self, name: &str, stage: StageReport) {
        self.passed &= stage.verdicts.iter().all(|v| v.pass);
        self.stages.insert(name.to_string(), stage);
    }
}

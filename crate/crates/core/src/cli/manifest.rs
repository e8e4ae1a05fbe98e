//! The run manifest: everything needed to audit or replay a run.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::CliError;
use crate::engine::{GenerationStats, Individual};
use crate::objectives::{from_minimization, ObjectiveSpec};
use crate::oracle::OracleHandshake;
use crate::space::Genome;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "generations.jsonl";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// Stopped by a signal; the front is the last finished generation's.
    Interrupted,
    /// The oracle failed mid-run; only the history is meaningful.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    pub genome: Genome,
    /// Objective values as the oracle reports them (maximized ones positive).
    pub objectives: Vec<f64>,
}

impl FrontMember {
    pub fn from_individual(ind: &Individual, specs: &[ObjectiveSpec]) -> Self {
        Self {
            genome: ind.genome.clone(),
            objectives: specs
                .iter()
                .zip(&ind.objectives)
                .map(|(s, &v)| from_minimization(s.direction, v))
                .collect(),
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.genome.bit_eq(&other.genome)
            && self.objectives.len() == other.objectives.len()
            && self.objectives.iter().zip(&other.objectives).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub engine_version: String,
    pub protocol_version: u32,
    pub seed: u64,
    /// Unix seconds; both pinned to `SOURCE_DATE_EPOCH` when it is set.
    pub started_at: u64,
    pub finished_at: u64,
    pub config: RunConfig,
    pub space_fingerprint: String,
    pub handshake: OracleHandshake,
    pub objectives: Vec<ObjectiveSpec>,
    pub evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best: Option<FrontMember>,
    pub front: Vec<FrontMember>,
    pub history: Vec<GenerationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rendered: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Writes `dir/manifest.json` through a temporary file and a rename.
    pub fn write_atomic(&self, dir: &Path) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("writing manifest in {}: {e}", dir.display()));
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(text.as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        fs::rename(&tmp, dir.join(MANIFEST_FILE)).map_err(io)?;
        Ok(())
    }
}

/// Current time in Unix seconds, or `SOURCE_DATE_EPOCH` for reproducible output.
pub fn timestamp() -> u64 {
    if let Some(pinned) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return pinned;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

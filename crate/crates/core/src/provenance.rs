//! Provenance stanza embedded in every artifact so downstream stages can
//! refuse to mix outputs from different configurations.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 hex digest of the resolved run configuration.
    pub config_hash: String,
    /// Master seed the run was launched with.
    pub seed: u64,
    /// Pipeline stage that wrote the artifact.
    pub stage: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64, stage: impl Into<String>) -> Self {
        Provenance { config_hash: config_hash.into(), seed, stage: stage.into() }
    }

    /// Single-line comment form used at the top of CSV artifacts.
    pub fn csv_comment(&self) -> String {
        format!("# config_hash={} seed={} stage={}", self.config_hash, self.seed, self.stage)
    }
}

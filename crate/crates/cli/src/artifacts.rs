//! Artifact layout of a pipeline run directory and the JSON manifests the
//! stages exchange. Every reader checks existence first and reports which
//! stage produces the missing file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use xfct::error::{Error, Result};
use xfct::grid::Grid2;
use xfct::metrics::{AbundanceDelta, AbundanceTable, Confusion};
use xfct::provenance::Provenance;
use xfct::transform::RigidTransform;
use xfct::PhaseCatalog;

/// All file locations under one run directory.
#[derive(Clone, Debug)]
pub struct RunPaths {
    root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn truth(&self) -> PathBuf {
        self.root.join("truth.vol")
    }

    pub fn catalog(&self) -> PathBuf {
        self.root.join("catalog.json")
    }

    pub fn ct(&self) -> PathBuf {
        self.root.join("ct.vol")
    }

    pub fn surfaces(&self) -> PathBuf {
        self.root.join("surfaces.json")
    }

    pub fn xrf_dir(&self, surface: &str) -> PathBuf {
        self.root.join("xrf").join(surface)
    }

    pub fn registration(&self, surface: &str) -> PathBuf {
        self.root.join("register").join(format!("{surface}.json"))
    }

    pub fn cluster_dir(&self, surface: &str) -> PathBuf {
        self.root.join("cluster").join(surface)
    }

    pub fn map_labels(&self, surface: &str) -> PathBuf {
        self.cluster_dir(surface).join("labels_map.pgm")
    }

    pub fn ct_labels(&self, surface: &str) -> PathBuf {
        self.cluster_dir(surface).join("labels_ct.pgm")
    }

    pub fn centroids(&self, surface: &str) -> PathBuf {
        self.cluster_dir(surface).join("centroids.csv")
    }

    pub fn cluster_summary(&self, surface: &str) -> PathBuf {
        self.cluster_dir(surface).join("summary.json")
    }

    pub fn history(&self) -> PathBuf {
        self.root.join("train").join("history.csv")
    }

    pub fn checkpoint(&self, epoch: usize) -> PathBuf {
        self.root.join("train").join(format!("checkpoint_ep{epoch:04}.xfcw"))
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("train").join("model.xfcw")
    }

    pub fn segmented(&self) -> PathBuf {
        self.root.join("segmented.vol")
    }

    pub fn evaluation_dir(&self) -> PathBuf {
        self.root.join("evaluate")
    }

    pub fn evaluation(&self) -> PathBuf {
        self.evaluation_dir().join("evaluation.json")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn report(&self) -> PathBuf {
        self.report_dir().join("report.json")
    }

    pub fn render(&self, kind: &str, z: usize) -> PathBuf {
        self.report_dir().join("slices").join(format!("{kind}_z{z:03}.png"))
    }
}

/// Fails with a dependency error naming the producing stage when `path` has
/// not been written yet.
pub fn require(path: &Path, consumer: &str, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::missing_stage(consumer, producer, path))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, format!("serialize: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, format!("invalid JSON: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceRole {
    Training,
    Validation,
}

/// One mapped surface: where it sits in the truth volume and the exact
/// transform carrying detector coordinates into volume world space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceMeta {
    pub name: String,
    pub role: SurfaceRole,
    pub z_index: usize,
    pub z_um: f64,
    pub true_transform: RigidTransform,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfacesFile {
    pub provenance: Provenance,
    pub detector_grid: Grid2,
    pub surfaces: Vec<SurfaceMeta>,
}

impl SurfacesFile {
    pub fn of_role(&self, role: SurfaceRole) -> impl Iterator<Item = &SurfaceMeta> {
        self.surfaces.iter().filter(move |s| s.role == role)
    }
}

/// Catalog artifact: the phase list with generator-realized abundances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CatalogFile {
    pub provenance: Provenance,
    pub catalog: PhaseCatalog,
}

/// Registration outcome for one surface.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegistrationFile {
    pub provenance: Provenance,
    pub surface: String,
    pub initial: RigidTransform,
    pub transform: RigidTransform,
    pub mi: f64,
    pub evaluations: usize,
    /// Volume slice closest to the registered plane; label transfer and
    /// training pair on this orthoslice.
    pub z_index: usize,
}

/// Clustering outcome for one surface.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterSummaryFile {
    pub provenance: Provenance,
    pub surface: String,
    pub z_index: usize,
    pub k: usize,
    pub void_cluster: Option<usize>,
    pub inertia: f64,
    /// Cluster index -> assigned phase name.
    pub assignment: BTreeMap<usize, String>,
    /// Percent of nonvoid detector pixels per phase, catalog order.
    pub phase_abundance_pct: BTreeMap<String, f64>,
}

/// Scores of one validation surface: net prediction against the fused
/// cluster labels on the matching orthoslice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceScore {
    pub surface: String,
    pub z_index: usize,
    pub accuracy_pct: f64,
    pub retained: u64,
}

/// Evaluation artifact: per-surface and pooled validation scores, the
/// whole-volume comparison against generator truth, and abundance tables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub provenance: Provenance,
    /// Class names indexed by label; entry 0 is void.
    pub classes: Vec<String>,
    pub validation: Vec<SurfaceScore>,
    /// Counts pooled over every validation surface; absent when the run has
    /// no validation surfaces.
    pub validation_confusion: Option<Confusion>,
    pub validation_accuracy_pct: Option<f64>,
    pub volume_confusion: Confusion,
    pub volume_accuracy_pct: f64,
    pub abundance_segmented: AbundanceTable,
    pub abundance_truth: AbundanceTable,
    /// Segmented minus truth, percentage points per phase.
    pub abundance_delta: AbundanceDelta,
    /// Catalog-declared expectations, when every phase carries one.
    pub abundance_expected: Option<AbundanceTable>,
    pub expected_delta: Option<AbundanceDelta>,
}

/// One artifact's provenance stamp as collated into the final report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
}

/// Run summary: provenance audit over every artifact plus the headline
/// evaluation numbers and rendered snapshots.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub provenance: Provenance,
    pub config_name: String,
    pub consistent: bool,
    pub artifacts: Vec<ArtifactRecord>,
    pub validation_accuracy_pct: Option<f64>,
    pub volume_accuracy_pct: f64,
    pub abundance_segmented: AbundanceTable,
    pub abundance_delta_vs_truth: AbundanceDelta,
    pub renders: Vec<String>,
}

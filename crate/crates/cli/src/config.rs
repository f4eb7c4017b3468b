//! The single flat JSON configuration driving every pipeline stage, plus
//! dotted-path overrides, config hashing, and per-stage seed derivation.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xfct::catalog::PhaseCatalog;
use xfct::error::{Error, Result};
use xfct::grid::Grid3;
use xfct::phantom::{CoarseGrainSpec, CtSimParams, CylinderSpec, InclusionSpec, MatrixSpec, XrfSimParams};
use xfct::preprocess::BilateralParams;
use xfct::segnet::AugmentationSpec;
use xfct::UNetConfig;

/// Geometry sections of the phantom; the grid and seed are supplied
/// separately (top-level `grid`, stage seed).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    pub cylinder: CylinderSpec,
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub coarse: Vec<CoarseGrainSpec>,
    #[serde(default)]
    pub inclusion: Option<InclusionSpec>,
}

/// Where the element maps are measured: detector resolution and the z
/// indices of the mapped surfaces. Training surfaces feed the label builder;
/// validation surfaces emulate cut-and-scan checks of the trained model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XrfSection {
    pub detector_spacing_um: f64,
    pub training_z: Vec<usize>,
    #[serde(default)]
    pub validation_z: Vec<usize>,
    pub sim: XrfSimParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    pub bilateral: BilateralParams,
    /// Elements denoised before clustering and registration.
    #[serde(default)]
    pub filter_elements: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub k: usize,
    pub restarts: usize,
    /// Weight of the CT channel relative to the element channels.
    pub ct_weight: f64,
    /// Rescale every channel to the full 8-bit range before clustering.
    pub normalize: bool,
    #[serde(default)]
    pub points: Option<xfct::PointAnalysis>,
}

/// Search settings for slice registration. The initial pose is the known
/// surface transform perturbed by the configured offsets, standing in for
/// the manual coarse alignment step.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterSection {
    /// Element map used as the fixed image; "mean" averages all maps.
    pub channel: String,
    pub bins: usize,
    pub perturb_translation_um: [f64; 3],
    pub perturb_rotation_deg: [f64; 3],
    pub translation_bounds_um: [f64; 3],
    pub rotation_bounds_deg: [f64; 3],
    pub translation_step_um: f64,
    pub rotation_step_deg: f64,
    pub min_translation_step_um: f64,
    pub min_rotation_step_deg: f64,
    pub tolerance: f64,
    pub exclude_fill: bool,
}

/// Training hyperparameters; the optimizer seed is derived from the master
/// seed at run time.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// Tile stride in pixels; 0 means one patch width.
    #[serde(default)]
    pub patch_step: usize,
    pub validation_fraction: f64,
    pub augmentation: AugmentationSpec,
    pub base_lr: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub loss_epsilon: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub keep_checkpoints: usize,
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> xfct::segnet::TrainConfig {
        xfct::segnet::TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            patch_step: self.patch_step,
            validation_fraction: self.validation_fraction,
            augmentation: self.augmentation.clone(),
            base_lr: self.base_lr,
            rho: self.rho,
            epsilon: self.epsilon,
            loss_epsilon: self.loss_epsilon,
            plateau_patience: self.plateau_patience,
            plateau_factor: self.plateau_factor,
            keep_checkpoints: self.keep_checkpoints,
            seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// z indices rendered as PNG slice snapshots.
    pub slices: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub seed: u64,
    /// Worker threads for intra-stage parallelism; 0 uses every core.
    /// 1 guarantees bit-reproducible artifacts.
    #[serde(default)]
    pub threads: usize,
    pub grid: Grid3,
    pub catalog: PhaseCatalog,
    pub phantom: PhantomSection,
    pub ct: CtSimParams,
    pub xrf: XrfSection,
    pub preprocess: PreprocessSection,
    pub cluster: ClusterSection,
    pub register: RegisterSection,
    pub network: UNetConfig,
    pub train: TrainSection,
    pub report: ReportSection,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("config `name` must be nonempty"));
        }
        self.catalog.validate()?;
        self.ct.validate()?;
        self.xrf.sim.validate()?;
        self.preprocess.bilateral.validate()?;
        self.network.validate()?;
        // Exercise the library-side checks early with a throwaway seed.
        self.train.to_train_config(0).validate()?;

        let n_phases = self.catalog.phases.len();
        for phase in &self.catalog.phases {
            if self.ct.attenuation.get(&phase.name).is_none() {
                return Err(Error::config(format!(
                    "ct.attenuation is missing phase {:?}",
                    phase.name
                )));
            }
        }
        if self.network.classes != n_phases + 1 {
            return Err(Error::config(format!(
                "network.classes must be phases + void = {}, got {}",
                n_phases + 1,
                self.network.classes
            )));
        }
        if self.network.in_channels != 1 {
            return Err(Error::config("network.in_channels must be 1 (the CT channel)"));
        }
        if self.cluster.k != n_phases + 1 {
            return Err(Error::config(format!(
                "cluster.k must cover every phase plus void = {}, got {}",
                n_phases + 1,
                self.cluster.k
            )));
        }
        if self.cluster.restarts == 0 {
            return Err(Error::config("cluster.restarts must be at least 1"));
        }
        if !(self.cluster.ct_weight > 0.0) || !self.cluster.ct_weight.is_finite() {
            return Err(Error::config("cluster.ct_weight must be positive and finite"));
        }
        if let Some(points) = &self.cluster.points {
            points.validate()?;
        }

        let [nz, ny, nx] = self.grid.dims;
        if self.xrf.training_z.is_empty() {
            return Err(Error::config("xrf.training_z needs at least one surface"));
        }
        let mut seen = Vec::new();
        for (role, list) in
            [("training", &self.xrf.training_z), ("validation", &self.xrf.validation_z)]
        {
            for &z in list {
                if z >= nz {
                    return Err(Error::config(format!(
                        "xrf.{role}_z index {z} is outside the {nz}-slice volume"
                    )));
                }
                if seen.contains(&z) {
                    return Err(Error::config(format!("surface z {z} listed twice")));
                }
                seen.push(z);
            }
        }
        let s = self.xrf.detector_spacing_um;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::config("xrf.detector_spacing_um must be positive"));
        }
        if s < self.grid.spacing_um[1] || s < self.grid.spacing_um[2] {
            return Err(Error::config(
                "xrf.detector_spacing_um must not be finer than the volume grid",
            ));
        }

        for element in &self.preprocess.filter_elements {
            if !self.xrf.sim.elements.iter().any(|e| e == element) {
                return Err(Error::config(format!(
                    "preprocess.filter_elements names {element:?}, which is not emitted"
                )));
            }
        }
        if self.register.channel != "mean"
            && !self.xrf.sim.elements.iter().any(|e| *e == self.register.channel)
        {
            return Err(Error::config(format!(
                "register.channel {:?} is not an emitted element (or \"mean\")",
                self.register.channel
            )));
        }
        if self.register.bins < 2 {
            return Err(Error::config("register.bins must be at least 2"));
        }
        for a in 0..3 {
            if self.register.translation_bounds_um[a] < self.register.perturb_translation_um[a].abs()
                || self.register.rotation_bounds_deg[a] < self.register.perturb_rotation_deg[a].abs()
            {
                return Err(Error::config(
                    "register search bounds must cover the configured perturbation",
                ));
            }
        }

        if self.network.patch_size > ny || self.network.patch_size > nx {
            return Err(Error::config(format!(
                "network.patch_size {} does not fit {ny}x{nx} slices",
                self.network.patch_size
            )));
        }
        for &z in &self.report.slices {
            if z >= nz {
                return Err(Error::config(format!(
                    "report.slices index {z} is outside the {nz}-slice volume"
                )));
            }
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON form; stamped into every artifact.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// Deterministic per-stage seed stream derived from the master seed, so
    /// re-running one stage never shifts another stage's draws.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for &b in stage.as_bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        splitmix64(h)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Resolves `--config`: an existing path is used as-is, otherwise the name
/// is looked up as `<dir>/<name>.json` where `<dir>` comes from
/// `XFCT_CONFIG_DIR` (default `configs`).
pub fn resolve_config_path(arg: &str) -> PathBuf {
    let direct = Path::new(arg);
    if direct.exists() {
        return direct.to_path_buf();
    }
    let dir = env::var_os("XFCT_CONFIG_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("configs"));
    let file = if arg.ends_with(".json") { arg.to_string() } else { format!("{arg}.json") };
    dir.join(file)
}

/// One `--set path=value` override. The value is parsed as JSON when
/// possible and falls back to a bare string, so `--set train.epochs=20` and
/// `--set register.channel=Si` both work.
pub fn parse_override(raw: &str) -> Result<(String, serde_json::Value)> {
    let (path, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {raw:?} is not of the form path=value")))?;
    if path.is_empty() {
        return Err(Error::config(format!("override {raw:?} has an empty path")));
    }
    let parsed = serde_json::from_str(value)
        .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    Ok((path.to_string(), parsed))
}

fn apply_override(root: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        match node {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert((*seg).to_string(), value);
                    return Ok(());
                }
                node = map.get_mut(*seg).ok_or_else(|| {
                    Error::config(format!(
                        "override path `{path}` has no section `{}`",
                        segments[..=i].join(".")
                    ))
                })?;
            }
            serde_json::Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| {
                    Error::config(format!("override path `{path}`: `{seg}` is not an array index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    Error::config(format!(
                        "override path `{path}`: index {idx} out of range (len {len})"
                    ))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                node = slot;
            }
            _ => {
                return Err(Error::config(format!(
                    "override path `{path}`: `{}` is not a section",
                    segments[..i].join(".")
                )))
            }
        }
    }
    unreachable!("split('.') yields at least one segment")
}

/// Loads, overrides, and validates a pipeline config. Deserialization
/// errors carry the offending JSON path.
pub fn load_config(path: &Path, overrides: &[(String, serde_json::Value)]) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut tree: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, format!("invalid JSON: {e}")))?;
    for (key, value) in overrides {
        apply_override(&mut tree, key, value.clone())?;
    }
    let text = serde_json::to_string(&tree).expect("value reserializes");
    let mut de = serde_json::de::Deserializer::from_str(&text);
    let config: PipelineConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| Error::config(format!("config `{}`: {}", e.path(), e.inner())))?;
    config.validate()?;
    Ok(config)
}

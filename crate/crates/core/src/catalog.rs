//! Mineral phase descriptions: composition flags, expected abundances,
//! and the ordered rules that map clusters onto phase names.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Qualitative presence of an element in a phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionFlag {
    Absent,
    Contains,
    Rich,
}

/// One mineral phase. Label ids are positional: the phase at index `i` of
/// the catalog is voxel label `i + 1` (0 stays void).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    #[serde(default)]
    pub composition: BTreeMap<String, CompositionFlag>,
    /// Expected abundance as percent of solid (nonvoid) volume.
    #[serde(default)]
    pub expected_abundance_pct: Option<f64>,
    #[serde(default)]
    pub abundance_tolerance_pct: Option<f64>,
    /// 1 = least attenuating phase in CT, higher = denser.
    #[serde(default)]
    pub ct_density_rank: Option<u32>,
}

/// How a rule picks its cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleCriterion {
    /// Highest centroid value of the discriminator element among the
    /// remaining candidate clusters.
    CentroidArgmax,
    /// Cluster containing the point with the highest mass percent of the
    /// discriminator element (points inside already-assigned clusters are
    /// ignored).
    PointArgmax,
}

/// One step of the ordered assignment procedure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssignmentRule {
    pub element: String,
    pub criterion: RuleCriterion,
    pub phase: String,
}

/// Spot measurement used by point-argmax rules.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointSample {
    /// Pixel location (y, x) on the map grid.
    pub location: [usize; 2],
    pub mass_pct: BTreeMap<String, f64>,
}

/// A set of spot measurements (mass percent per element).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PointAnalysis {
    pub points: Vec<PointSample>,
}

impl PointAnalysis {
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            for (el, &pct) in &p.mass_pct {
                if !(pct >= 0.0) {
                    return Err(Error::config(format!(
                        "point at ({}, {}): {el} mass percent must be >= 0, got {pct}",
                        p.location[0], p.location[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ordered phase list plus the rules that identify each phase.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseCatalog {
    pub phases: Vec<Phase>,
    #[serde(default)]
    pub rules: Vec<AssignmentRule>,
    /// Phase assigned by deduction once every rule has fired.
    #[serde(default)]
    pub remainder: Option<String>,
    /// Filled in by phantom generation: percent of nonvoid voxels per phase.
    #[serde(default)]
    pub realized_abundance_pct: Option<BTreeMap<String, f64>>,
}

impl PhaseCatalog {
    pub fn new(phases: Vec<Phase>, rules: Vec<AssignmentRule>, remainder: Option<String>) -> Result<Self> {
        let catalog = Self { phases, rules, remainder, realized_abundance_pct: None };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::config("phase catalog must list at least one phase"));
        }
        if self.phases.len() > u8::MAX as usize {
            return Err(Error::config("phase catalog exceeds 255 phases"));
        }
        for (i, a) in self.phases.iter().enumerate() {
            if a.name.is_empty() {
                return Err(Error::config("phase name must be nonempty"));
            }
            if self.phases[i + 1..].iter().any(|b| b.name == a.name) {
                return Err(Error::config(format!("duplicate phase name {:?}", a.name)));
            }
        }
        if let Some(rem) = &self.remainder {
            if self.phase(rem).is_none() {
                return Err(Error::config(format!("remainder phase {rem:?} is not in the catalog")));
            }
        }
        for rule in &self.rules {
            if self.phase(&rule.phase).is_none() {
                return Err(Error::config(format!("rule targets unknown phase {:?}", rule.phase)));
            }
            if rule.element.is_empty() {
                return Err(Error::config(format!("rule for {:?} has an empty element", rule.phase)));
            }
        }
        Ok(())
    }

    pub fn phase(&self, name: &str) -> Option<&Phase> {
        self.phases.iter().find(|p| p.name == name)
    }

    /// Voxel label of a phase (1-based position in the catalog).
    pub fn label_of(&self, name: &str) -> Option<u8> {
        self.phases.iter().position(|p| p.name == name).map(|i| (i + 1) as u8)
    }

    /// Phase behind a voxel label; `None` for void (0) or out of range.
    pub fn phase_of_label(&self, label: u8) -> Option<&Phase> {
        if label == 0 {
            None
        } else {
            self.phases.get(label as usize - 1)
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.phases.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn with_realized(&self, realized: BTreeMap<String, f64>) -> Self {
        let mut out = self.clone();
        out.realized_abundance_pct = Some(realized);
        out
    }
}

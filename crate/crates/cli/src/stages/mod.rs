//! Pipeline stages and their shared run context. `all` chains the stages
//! in dependency order; each stage reads its inputs from the run directory
//! and fails with a dependency error when an upstream artifact is absent.

use xfct::error::Result;
use xfct::provenance::Provenance;

use crate::artifacts::RunPaths;
use crate::config::PipelineConfig;

mod cluster;
mod evaluate;
mod phantom;
mod register;
mod report;
mod segment;
mod simulate;
mod train;

/// Everything a stage needs: the validated config, its hash, the artifact
/// layout, and the force flag for consistency overrides.
pub struct Context {
    pub config: PipelineConfig,
    pub config_hash: String,
    pub paths: RunPaths,
    pub force: bool,
}

impl Context {
    pub fn new(config: PipelineConfig, paths: RunPaths, force: bool) -> Self {
        let config_hash = config.hash();
        Context { config, config_hash, paths, force }
    }

    pub fn provenance(&self, stage: &str) -> Provenance {
        Provenance::new(self.config_hash.clone(), self.config.seed, stage)
    }

    pub fn seed(&self, stage: &str) -> u64 {
        self.config.stage_seed(stage)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Phantom,
    Simulate,
    Register,
    Cluster,
    Train,
    Segment,
    Evaluate,
    Report,
}

impl Stage {
    pub const CHAIN: [Stage; 8] = [
        Stage::Phantom,
        Stage::Simulate,
        Stage::Register,
        Stage::Cluster,
        Stage::Train,
        Stage::Segment,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Phantom => "phantom",
            Stage::Simulate => "simulate",
            Stage::Register => "register",
            Stage::Cluster => "cluster",
            Stage::Train => "train",
            Stage::Segment => "segment",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

pub fn run_stage(ctx: &Context, stage: Stage) -> Result<()> {
    match stage {
        Stage::Phantom => phantom::run(ctx),
        Stage::Simulate => simulate::run(ctx),
        Stage::Register => register::run(ctx),
        Stage::Cluster => cluster::run(ctx),
        Stage::Train => train::run(ctx),
        Stage::Segment => segment::run(ctx),
        Stage::Evaluate => evaluate::run(ctx),
        Stage::Report => report::run(ctx),
    }
}

pub fn run_all(ctx: &Context) -> Result<()> {
    for stage in Stage::CHAIN {
        run_stage(ctx, stage)?;
    }
    Ok(())
}

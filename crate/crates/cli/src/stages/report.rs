//! `report`: audit the provenance of every artifact in the run directory,
//! collate the evaluation into one summary, and render slice snapshots.

use std::path::{Path, PathBuf};

use xfct::error::{Error, Result};
use xfct::io::checkpoint::read_checkpoint;
use xfct::io::container::{read_label_volume, read_volume};
use xfct::provenance::Provenance;

use crate::artifacts::{
    read_json, require, ArtifactRecord, CatalogFile, ClusterSummaryFile, EvaluationFile,
    RegistrationFile, ReportFile, SurfacesFile,
};
use crate::render::{save_label_png, save_scalar_png};
use crate::stages::Context;

fn record(ctx: &Context, path: &Path, prov: Option<Provenance>) -> Option<ArtifactRecord> {
    let prov = prov?;
    let rel = path.strip_prefix(ctx.paths.root()).unwrap_or(path);
    Some(ArtifactRecord {
        path: rel.display().to_string(),
        stage: prov.stage,
        config_hash: prov.config_hash,
        seed: prov.seed,
    })
}

pub fn run(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    require(&ctx.paths.evaluation(), "report", "evaluate")?;
    require(&ctx.paths.truth(), "report", "phantom")?;
    require(&ctx.paths.catalog(), "report", "phantom")?;
    require(&ctx.paths.ct(), "report", "simulate")?;
    require(&ctx.paths.surfaces(), "report", "simulate")?;
    require(&ctx.paths.model(), "report", "train")?;
    require(&ctx.paths.segmented(), "report", "segment")?;

    let catalog_file: CatalogFile = read_json(&ctx.paths.catalog())?;
    let surfaces: SurfacesFile = read_json(&ctx.paths.surfaces())?;
    let evaluation: EvaluationFile = read_json(&ctx.paths.evaluation())?;
    let (truth, truth_prov) = read_label_volume(&ctx.paths.truth())?;
    let (ct, ct_prov) = read_volume(&ctx.paths.ct())?;
    let (segmented, seg_prov) = read_label_volume(&ctx.paths.segmented())?;
    let model_prov = read_checkpoint(&ctx.paths.model())?.provenance;

    let mut artifacts = Vec::new();
    artifacts.extend(record(ctx, &ctx.paths.catalog(), Some(catalog_file.provenance.clone())));
    artifacts.extend(record(ctx, &ctx.paths.truth(), truth_prov));
    artifacts.extend(record(ctx, &ctx.paths.ct(), ct_prov));
    artifacts.extend(record(ctx, &ctx.paths.surfaces(), Some(surfaces.provenance.clone())));
    for surface in &surfaces.surfaces {
        let reg_path = ctx.paths.registration(&surface.name);
        if reg_path.exists() {
            let reg: RegistrationFile = read_json(&reg_path)?;
            artifacts.extend(record(ctx, &reg_path, Some(reg.provenance)));
        }
        let summary_path = ctx.paths.cluster_summary(&surface.name);
        if summary_path.exists() {
            let summary: ClusterSummaryFile = read_json(&summary_path)?;
            artifacts.extend(record(ctx, &summary_path, Some(summary.provenance)));
        }
    }
    artifacts.extend(record(ctx, &ctx.paths.model(), model_prov));
    artifacts.extend(record(ctx, &ctx.paths.segmented(), seg_prov));
    artifacts.extend(record(ctx, &ctx.paths.evaluation(), Some(evaluation.provenance.clone())));

    let consistent = artifacts.iter().all(|a| a.config_hash == ctx.config_hash);
    if !consistent {
        let strays: Vec<String> = artifacts
            .iter()
            .filter(|a| a.config_hash != ctx.config_hash)
            .map(|a| format!("{} ({})", a.path, &a.config_hash[..12.min(a.config_hash.len())]))
            .collect();
        let message = format!(
            "run directory mixes configurations: {} artifact(s) were not produced by config \
             {}: {}; pass --force to report anyway",
            strays.len(),
            &ctx.config_hash[..12],
            strays.join(", ")
        );
        if !ctx.force {
            return Err(Error::config(message));
        }
        eprintln!("[report] warning: {message}");
    }

    let (lo, hi) = ct.value_range();
    let mut renders = Vec::new();
    let mut rendered: Vec<PathBuf> = Vec::new();
    for &z in &cfg.report.slices {
        let ct_png = ctx.paths.render("ct", z);
        save_scalar_png(&ct_png, &ct.slice_z(z)?, lo, hi)?;
        let truth_png = ctx.paths.render("truth", z);
        save_label_png(&truth_png, &truth.slice_z(z)?, &catalog_file.catalog)?;
        let pred_png = ctx.paths.render("pred", z);
        save_label_png(&pred_png, &segmented.slice_z(z)?, &catalog_file.catalog)?;
        rendered.extend([ct_png, truth_png, pred_png]);
    }
    for p in &rendered {
        renders.push(p.strip_prefix(ctx.paths.root()).unwrap_or(p).display().to_string());
    }

    let report = ReportFile {
        provenance: ctx.provenance("report"),
        config_name: cfg.name.clone(),
        consistent,
        artifacts,
        validation_accuracy_pct: evaluation.validation_accuracy_pct,
        volume_accuracy_pct: evaluation.volume_accuracy_pct,
        abundance_segmented: evaluation.abundance_segmented.clone(),
        abundance_delta_vs_truth: evaluation.abundance_delta.clone(),
        renders,
    };
    crate::artifacts::write_json(&ctx.paths.report(), &report)?;

    println!(
        "[report] {} artifacts audited ({}), {} snapshot(s) rendered",
        report.artifacts.len(),
        if consistent { "consistent" } else { "MIXED CONFIGS" },
        report.renders.len()
    );
    for (phase, pct) in report
        .abundance_segmented
        .phases
        .iter()
        .zip(&report.abundance_segmented.percent)
    {
        println!("[report]   {phase:<12} {pct:6.2}%");
    }
    Ok(())
}

//! `evaluate`: score the segmented volume against the fused labels on the
//! held-out validation surfaces and against the generator truth, and tabulate
//! phase abundances.

use std::fs;
use std::path::Path;

use xfct::error::{Error, Result};
use xfct::io::container::read_label_volume;
use xfct::io::pgm::read_label_pgm;
use xfct::metrics::{
    abundance_csv, compare_abundances, confusion_csv, confusion_matrix, confusion_matrix_2d,
    phase_abundances, AbundanceTable, Confusion,
};

use crate::artifacts::{
    read_json, require, write_json, CatalogFile, ClusterSummaryFile, EvaluationFile, SurfaceRole,
    SurfaceScore, SurfacesFile,
};
use crate::stages::Context;

fn write_csv(path: &Path, comment: &str, body: &str) -> Result<()> {
    fs::write(path, format!("{comment}\n{body}")).map_err(|e| Error::io(path, e))
}

pub fn run(ctx: &Context) -> Result<()> {
    require(&ctx.paths.model(), "evaluate", "train")?;
    require(&ctx.paths.segmented(), "evaluate", "segment")?;
    require(&ctx.paths.truth(), "evaluate", "phantom")?;
    require(&ctx.paths.catalog(), "evaluate", "phantom")?;
    require(&ctx.paths.surfaces(), "evaluate", "simulate")?;

    let (segmented, _) = read_label_volume(&ctx.paths.segmented())?;
    let (truth, _) = read_label_volume(&ctx.paths.truth())?;
    let catalog = read_json::<CatalogFile>(&ctx.paths.catalog())?.catalog;
    let surfaces: SurfacesFile = read_json(&ctx.paths.surfaces())?;
    let classes = catalog.phases.len() + 1;
    let mut names = vec!["void".to_string()];
    names.extend(catalog.names().iter().map(|s| s.to_string()));

    // Validation surfaces score the net the way a cut-and-scan check would:
    // prediction on the matching orthoslice vs the fused map labels.
    let mut validation = Vec::new();
    let mut pooled = vec![0u64; classes * classes];
    for surface in surfaces.of_role(SurfaceRole::Validation) {
        require(&ctx.paths.cluster_summary(&surface.name), "evaluate", "cluster")?;
        require(&ctx.paths.ct_labels(&surface.name), "evaluate", "cluster")?;
        let summary: ClusterSummaryFile =
            read_json(&ctx.paths.cluster_summary(&surface.name))?;
        let (reference, _) = read_label_pgm(&ctx.paths.ct_labels(&surface.name))?;
        let pred = segmented.slice_z(summary.z_index)?;
        let confusion = confusion_matrix_2d(&pred, &reference, classes, &[0])?;
        for (acc, &c) in pooled.iter_mut().zip(&confusion.counts) {
            *acc += c;
        }
        validation.push(SurfaceScore {
            surface: surface.name.clone(),
            z_index: summary.z_index,
            accuracy_pct: confusion.accuracy_pct(),
            retained: confusion.retained,
        });
    }
    let validation_confusion = if validation.is_empty() {
        None
    } else {
        Some(Confusion::from_counts(classes, pooled)?)
    };
    let validation_accuracy_pct = validation_confusion.as_ref().map(Confusion::accuracy_pct);

    let volume_confusion = confusion_matrix(&segmented, &truth, classes, &[0])?;
    let volume_accuracy_pct = volume_confusion.accuracy_pct();

    let abundance_segmented = phase_abundances(&segmented, &catalog)?;
    let abundance_truth = phase_abundances(&truth, &catalog)?;
    let abundance_delta = compare_abundances(&abundance_segmented, &abundance_truth)?;
    let abundance_expected = catalog
        .phases
        .iter()
        .map(|p| p.expected_abundance_pct)
        .collect::<Option<Vec<f64>>>()
        .map(|percent| AbundanceTable {
            phases: catalog.names().iter().map(|s| s.to_string()).collect(),
            percent,
        });
    let expected_delta = abundance_expected
        .as_ref()
        .map(|e| compare_abundances(&abundance_segmented, e))
        .transpose()?;

    let prov = ctx.provenance("evaluate");
    let dir = ctx.paths.evaluation_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let comment = prov.csv_comment();
    write_csv(&dir.join("abundance.csv"), &comment, &abundance_csv(&abundance_segmented))?;
    write_csv(&dir.join("abundance_truth.csv"), &comment, &abundance_csv(&abundance_truth))?;
    write_csv(
        &dir.join("confusion_volume.csv"),
        &comment,
        &confusion_csv(&volume_confusion, &names),
    )?;
    if let Some(c) = &validation_confusion {
        write_csv(&dir.join("confusion_validation.csv"), &comment, &confusion_csv(c, &names))?;
    }

    let file = EvaluationFile {
        provenance: prov,
        classes: names,
        validation,
        validation_confusion,
        validation_accuracy_pct,
        volume_confusion,
        volume_accuracy_pct,
        abundance_segmented,
        abundance_truth,
        abundance_delta,
        abundance_expected,
        expected_delta,
    };
    write_json(&ctx.paths.evaluation(), &file)?;

    match file.validation_accuracy_pct {
        Some(acc) => println!(
            "[evaluate] validation accuracy {acc:.2}% over {} surface(s); volume accuracy {:.2}%",
            file.validation.len(),
            volume_accuracy_pct
        ),
        None => println!("[evaluate] volume accuracy {volume_accuracy_pct:.2}%"),
    }
    println!(
        "[evaluate] largest abundance deviation from truth: {:.2} points",
        file.abundance_delta.max_abs
    );
    Ok(())
}

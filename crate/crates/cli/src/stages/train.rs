//! `train`: pair tomogram orthoslices with the cluster-derived labels on the
//! training surfaces and fit the segmentation net from scratch.

use std::fmt::Write as _;
use std::fs;

use xfct::error::{Error, Result};
use xfct::image::ScalarImage;
use xfct::io::checkpoint::write_checkpoint;
use xfct::io::container::read_volume;
use xfct::io::pgm::read_label_pgm;
use xfct::segnet;

use crate::artifacts::{read_json, require, ClusterSummaryFile, SurfaceRole, SurfacesFile};
use crate::stages::Context;

/// Maps an orthoslice into [0, 1] with the volume-wide window, the same
/// scaling inference applies, so training and prediction see one intensity
/// scale.
fn unit_slice(slice: &ScalarImage, lo: f64, hi: f64) -> ScalarImage {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data: Vec<f32> =
        slice.data().iter().map(|&v| ((v as f64 - lo) / span) as f32).collect();
    ScalarImage::new(*slice.grid(), data).expect("finite normalized values")
}

pub fn run(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    require(&ctx.paths.ct(), "train", "simulate")?;
    require(&ctx.paths.surfaces(), "train", "simulate")?;
    let (ct, _) = read_volume(&ctx.paths.ct())?;
    let surfaces: SurfacesFile = read_json(&ctx.paths.surfaces())?;
    let (lo, hi) = ct.value_range();

    let mut examples = Vec::new();
    for surface in surfaces.of_role(SurfaceRole::Training) {
        require(&ctx.paths.cluster_summary(&surface.name), "train", "cluster")?;
        require(&ctx.paths.ct_labels(&surface.name), "train", "cluster")?;
        let summary: ClusterSummaryFile =
            read_json(&ctx.paths.cluster_summary(&surface.name))?;
        let (labels, _) = read_label_pgm(&ctx.paths.ct_labels(&surface.name))?;
        let slice = ct.slice_z(summary.z_index)?;
        examples.push((unit_slice(&slice, lo, hi), labels));
    }

    let train_cfg = cfg.train.to_train_config(ctx.seed("train"));
    let out = segnet::train(&examples, &cfg.network, &train_cfg)?;

    let prov = ctx.provenance("train");
    let dir = ctx.paths.model().parent().expect("model sits in a directory").to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut history = format!("{}\nepoch,train_loss,val_loss,lr_multiplier\n", prov.csv_comment());
    for row in &out.history {
        writeln!(
            history,
            "{},{:.6},{:.6},{}",
            row.epoch, row.train_loss, row.val_loss, row.lr_multiplier
        )
        .expect("string write");
    }
    fs::write(ctx.paths.history(), history).map_err(|e| Error::io(ctx.paths.history(), e))?;

    for c in &out.checkpoints {
        write_checkpoint(
            &ctx.paths.checkpoint(c.epoch),
            &cfg.network,
            c.epoch,
            c.val_loss,
            &c.params,
            Some(&prov),
        )?;
    }
    let best = &out.checkpoints[0];
    write_checkpoint(
        &ctx.paths.model(),
        &cfg.network,
        best.epoch,
        best.val_loss,
        &best.params,
        Some(&prov),
    )?;
    println!(
        "[train] {} slices, {} epochs; best val loss {:.4} at epoch {}",
        examples.len(),
        out.history.len(),
        best.val_loss,
        best.epoch
    );
    Ok(())
}

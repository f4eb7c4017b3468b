//! `phantom`: generate the ground-truth mineral volume and the catalog with
//! realized abundances.

use xfct::error::Result;
use xfct::io::container::write_label_volume;
use xfct::phantom::{generate_phantom, PhantomSpec};

use crate::artifacts::{write_json, CatalogFile};
use crate::stages::Context;

pub fn run(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let spec = PhantomSpec {
        grid: cfg.grid,
        cylinder: cfg.phantom.cylinder.clone(),
        matrix: cfg.phantom.matrix.clone(),
        coarse: cfg.phantom.coarse.clone(),
        inclusion: cfg.phantom.inclusion.clone(),
        seed: ctx.seed("phantom"),
    };
    let (truth, catalog) = generate_phantom(&spec, &cfg.catalog)?;

    let prov = ctx.provenance("phantom");
    write_label_volume(&ctx.paths.truth(), &truth, Some(&prov))?;
    write_json(&ctx.paths.catalog(), &CatalogFile { provenance: prov, catalog })?;

    let [nz, ny, nx] = cfg.grid.dims;
    let solid = truth.labels().iter().filter(|&&l| l != 0).count();
    println!(
        "[phantom] truth {nz}x{ny}x{nx}, {} phases, solid {:.1}%",
        cfg.catalog.phases.len(),
        100.0 * solid as f64 / truth.labels().len() as f64
    );
    Ok(())
}

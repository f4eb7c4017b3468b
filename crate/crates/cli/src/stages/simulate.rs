//! `simulate`: synthesize the tomogram and the per-surface element maps,
//! including interior validation surfaces that emulate cutting the sample
//! open and scanning the exposed face.

use xfct::error::Result;
use xfct::grid::Grid2;
use xfct::io::container::{read_label_volume, write_volume};
use xfct::phantom::simulate_xrf;
use xfct::transform::RigidTransform;

use crate::artifacts::{require, write_json, CatalogFile, SurfaceMeta, SurfaceRole, SurfacesFile};
use crate::stages::Context;

/// Detector pixels at the configured pitch covering the volume footprint;
/// pixel centres never overhang the outermost voxel centres.
fn detector_grid(ctx: &Context) -> Grid2 {
    let g = &ctx.config.grid;
    let s = ctx.config.xrf.detector_spacing_um;
    let dims = [1, 2].map(|a| {
        let extent = (g.dims[a] - 1) as f64 * g.spacing_um[a];
        (extent / s).floor() as usize + 1
    });
    Grid2::new(dims, [s, s], [g.origin_um[1], g.origin_um[2]]).expect("validated spacing")
}

pub fn run(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    require(&ctx.paths.truth(), "simulate", "phantom")?;
    require(&ctx.paths.catalog(), "simulate", "phantom")?;
    let (truth, _) = read_label_volume(&ctx.paths.truth())?;
    let catalog = crate::artifacts::read_json::<CatalogFile>(&ctx.paths.catalog())?.catalog;

    let prov = ctx.provenance("simulate");
    let ct = xfct::phantom::simulate_ct(&truth, &catalog, &cfg.ct, ctx.seed("simulate/ct"))?;
    write_volume(&ctx.paths.ct(), &ct, Some(&prov))?;

    let det = detector_grid(ctx);
    let mut surfaces = Vec::new();
    let roles = [
        (SurfaceRole::Training, &cfg.xrf.training_z),
        (SurfaceRole::Validation, &cfg.xrf.validation_z),
    ];
    for (role, zs) in roles {
        let tag = match role {
            SurfaceRole::Training => "training",
            SurfaceRole::Validation => "validation",
        };
        for &z in zs.iter() {
            let name = format!("{tag}_z{z:03}");
            let slice = truth.slice_z(z)?;
            let maps = simulate_xrf(
                &slice,
                &catalog,
                &cfg.xrf.sim,
                det,
                ctx.seed(&format!("simulate/xrf/{name}")),
            )?;
            xfct::io::mapset::write_map_set(&ctx.paths.xrf_dir(&name), &maps, Some(&prov))?;
            let z_um = cfg.grid.origin_um[0] + z as f64 * cfg.grid.spacing_um[0];
            surfaces.push(SurfaceMeta {
                name,
                role,
                z_index: z,
                z_um,
                true_transform: RigidTransform {
                    rotation_deg: [0.0; 3],
                    translation_um: [z_um, 0.0, 0.0],
                },
            });
        }
    }
    let n = surfaces.len();
    write_json(
        &ctx.paths.surfaces(),
        &SurfacesFile { provenance: prov, detector_grid: det, surfaces },
    )?;
    println!(
        "[simulate] tomogram + {n} surfaces ({} training, {} validation) at {:.0} um pitch",
        cfg.xrf.training_z.len(),
        cfg.xrf.validation_z.len(),
        cfg.xrf.detector_spacing_um
    );
    Ok(())
}

//! `register`: align each element-map surface with the tomogram by mutual
//! information, starting from the known pose perturbed by the configured
//! offsets (the stand-in for manual coarse alignment).

use xfct::error::{Error, Result};
use xfct::image::{ElementMapSet, ScalarImage};
use xfct::io::container::read_volume;
use xfct::preprocess::bilateral_filter;
use xfct::register::{register_slice, RegistrationConfig};
use xfct::transform::RigidTransform;

use crate::artifacts::{require, read_json, write_json, RegistrationFile, SurfacesFile};
use crate::stages::Context;

/// The fixed image driving the MI search: one configured element map, or
/// the mean of all maps, denoised with the shared bilateral settings.
pub fn fixed_image(ctx: &Context, maps: &ElementMapSet) -> Result<ScalarImage> {
    let raw = if ctx.config.register.channel == "mean" {
        let grid = *maps.grid();
        let n = maps.maps().len() as f32;
        let mut acc = vec![0.0f32; grid.pixel_count()];
        for map in maps.maps() {
            for (a, &v) in acc.iter_mut().zip(map.data()) {
                *a += v / n;
            }
        }
        ScalarImage::new(grid, acc)?
    } else {
        maps.map_of(&ctx.config.register.channel)
            .ok_or_else(|| {
                Error::config(format!(
                    "register.channel {:?} is not in the map set",
                    ctx.config.register.channel
                ))
            })?
            .clone()
    };
    bilateral_filter(&raw, &ctx.config.preprocess.bilateral)
}

fn perturbed(t: &RigidTransform, ctx: &Context) -> RigidTransform {
    let r = &ctx.config.register;
    RigidTransform {
        rotation_deg: [
            t.rotation_deg[0] + r.perturb_rotation_deg[0],
            t.rotation_deg[1] + r.perturb_rotation_deg[1],
            t.rotation_deg[2] + r.perturb_rotation_deg[2],
        ],
        translation_um: [
            t.translation_um[0] + r.perturb_translation_um[0],
            t.translation_um[1] + r.perturb_translation_um[1],
            t.translation_um[2] + r.perturb_translation_um[2],
        ],
    }
}

pub fn search_config(ctx: &Context, initial: RigidTransform) -> RegistrationConfig {
    let r = &ctx.config.register;
    RegistrationConfig {
        bins: r.bins,
        initial,
        rotation_bounds_deg: r.rotation_bounds_deg,
        translation_bounds_um: r.translation_bounds_um,
        rotation_step_deg: r.rotation_step_deg,
        translation_step_um: r.translation_step_um,
        min_rotation_step_deg: r.min_rotation_step_deg,
        min_translation_step_um: r.min_translation_step_um,
        tolerance: r.tolerance,
        exclude_fill: r.exclude_fill,
    }
}

/// Volume slice index closest to where the registered plane crosses the
/// detector centre.
pub fn nearest_slice(ctx: &Context, t: &RigidTransform, det: &xfct::grid::Grid2) -> usize {
    let g = &ctx.config.grid;
    let yc = det.origin_um[0] + (det.dims[0] - 1) as f64 / 2.0 * det.spacing_um[0];
    let xc = det.origin_um[1] + (det.dims[1] - 1) as f64 / 2.0 * det.spacing_um[1];
    let z_w = t.apply([0.0, yc, xc])[0];
    let iz = ((z_w - g.origin_um[0]) / g.spacing_um[0]).round();
    (iz.max(0.0) as usize).min(g.dims[0] - 1)
}

pub fn run(ctx: &Context) -> Result<()> {
    require(&ctx.paths.ct(), "register", "simulate")?;
    require(&ctx.paths.surfaces(), "register", "simulate")?;
    let (ct, _) = read_volume(&ctx.paths.ct())?;
    let surfaces: SurfacesFile = read_json(&ctx.paths.surfaces())?;

    for surface in &surfaces.surfaces {
        let dir = ctx.paths.xrf_dir(&surface.name);
        require(&dir.join("manifest.json"), "register", "simulate")?;
        let (maps, _) = xfct::io::mapset::read_map_set(&dir)?;
        let fixed = fixed_image(ctx, &maps)?;
        let initial = perturbed(&surface.true_transform, ctx);
        let out = register_slice(&ct, &fixed, &search_config(ctx, initial.clone()))?;
        let z_index = nearest_slice(ctx, &out.transform, &surfaces.detector_grid);
        write_json(
            &ctx.paths.registration(&surface.name),
            &RegistrationFile {
                provenance: ctx.provenance("register"),
                surface: surface.name.clone(),
                initial,
                transform: out.transform.clone(),
                mi: out.mi,
                evaluations: out.evaluations,
                z_index,
            },
        )?;
        let dt: f64 = (0..3)
            .map(|a| (out.transform.translation_um[a] - surface.true_transform.translation_um[a]).powi(2))
            .sum::<f64>()
            .sqrt();
        println!(
            "[register] {}: MI {:.4} after {} evaluations, {:.1} um from the survey pose",
            surface.name, out.mi, out.evaluations, dt
        );
    }
    Ok(())
}

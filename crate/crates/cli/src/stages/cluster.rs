//! `cluster`: build the fused element + tomogram feature stack on each
//! surface, label it with best-of-restarts K-means, assign minerals by the
//! catalog rules, and resample the labels into tomogram geometry.

use std::collections::BTreeMap;
use std::fs;

use xfct::cluster::{apply_assignment, assign_minerals, build_feature_stack, kmeans};
use xfct::error::{Error, Result};
use xfct::grid::Grid2;
use xfct::io::container::read_volume;
use xfct::io::pgm::write_label_pgm;
use xfct::metrics::centroid_csv;
use xfct::preprocess::{bilateral_filter, normalize_8bit, normalize_8bit_with_range};
use xfct::register::{extract_plane_slice, transfer_labels};

use crate::artifacts::{require, read_json, write_json, CatalogFile, ClusterSummaryFile, RegistrationFile, SurfacesFile};
use crate::stages::Context;

pub fn run(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    require(&ctx.paths.ct(), "cluster", "simulate")?;
    require(&ctx.paths.surfaces(), "cluster", "simulate")?;
    require(&ctx.paths.catalog(), "cluster", "phantom")?;
    let (ct, _) = read_volume(&ctx.paths.ct())?;
    let surfaces: SurfacesFile = read_json(&ctx.paths.surfaces())?;
    let catalog = read_json::<CatalogFile>(&ctx.paths.catalog())?.catalog;
    let (vol_lo, vol_hi) = ct.value_range();
    let ct_slice_grid = Grid2::from_volume_xy(ct.grid());

    for surface in &surfaces.surfaces {
        let reg_path = ctx.paths.registration(&surface.name);
        require(&reg_path, "cluster", "register")?;
        let reg: RegistrationFile = read_json(&reg_path)?;
        let dir = ctx.paths.xrf_dir(&surface.name);
        require(&dir.join("manifest.json"), "cluster", "simulate")?;
        let (mut maps, _) = xfct::io::mapset::read_map_set(&dir)?;

        for element in &cfg.preprocess.filter_elements {
            let denoised = {
                let map = maps.map_of(element).ok_or_else(|| {
                    Error::config(format!("preprocess.filter_elements names unknown map {element:?}"))
                })?;
                bilateral_filter(map, &cfg.preprocess.bilateral)?
            };
            maps.replace_map(element, denoised)?;
        }
        if cfg.cluster.normalize {
            for symbol in maps.symbols().to_vec() {
                let scaled = normalize_8bit(maps.map_of(&symbol).expect("own symbol"));
                maps.replace_map(&symbol, scaled)?;
            }
        }

        // The tomogram channel comes from the registered plane; the shared
        // volume-wide window keeps one intensity scale across surfaces.
        let plane = extract_plane_slice(&ct, &reg.transform, surfaces.detector_grid);
        let ct_channel = if cfg.cluster.normalize {
            normalize_8bit_with_range(&plane.image, vol_lo, vol_hi)
        } else {
            plane.image
        };

        let mut weights = vec![1.0; maps.symbols().len()];
        weights.push(cfg.cluster.ct_weight);
        let stack = build_feature_stack(&maps, &ct_channel, Some(&weights))?;
        let result = kmeans(
            &stack,
            cfg.cluster.k,
            cfg.cluster.restarts,
            ctx.seed(&format!("cluster/{}", surface.name)),
        )?;
        let assignment = assign_minerals(&result, &catalog, cfg.cluster.points.as_ref())?;
        let minerals = apply_assignment(&result.labels, &assignment, &catalog, result.void_cluster)?;

        let z_um = cfg.grid.origin_um[0] + reg.z_index as f64 * cfg.grid.spacing_um[0];
        let transferred = transfer_labels(&minerals, &reg.transform, ct_slice_grid, z_um);

        let prov = ctx.provenance("cluster");
        let out_dir = ctx.paths.cluster_dir(&surface.name);
        fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        write_label_pgm(&ctx.paths.map_labels(&surface.name), &minerals, Some(&prov))?;
        write_label_pgm(&ctx.paths.ct_labels(&surface.name), &transferred, Some(&prov))?;
        let csv = format!("{}\n{}", prov.csv_comment(), centroid_csv(&result, &assignment));
        fs::write(ctx.paths.centroids(&surface.name), csv)
            .map_err(|e| Error::io(ctx.paths.centroids(&surface.name), e))?;

        let mut phase_abundance_pct = BTreeMap::new();
        for (&cluster, phase) in &assignment {
            phase_abundance_pct.insert(phase.clone(), result.abundance_pct[cluster]);
        }
        write_json(
            &ctx.paths.cluster_summary(&surface.name),
            &ClusterSummaryFile {
                provenance: prov,
                surface: surface.name.clone(),
                z_index: reg.z_index,
                k: result.k,
                void_cluster: result.void_cluster,
                inertia: result.inertia,
                assignment,
                phase_abundance_pct,
            },
        )?;
        println!(
            "[cluster] {}: k={} inertia {:.3e}, labels transferred to slice {}",
            surface.name, result.k, result.inertia, reg.z_index
        );
    }
    Ok(())
}

//! Rigid registration of a 2D map against the CT volume by mutual
//! information, plus plane extraction and label transfer between the two
//! geometries.
//!
//! A 2D pixel at world (y, x) lifts to the 3D point (0, y, x) in map space;
//! the rigid transform carries map space into volume space. Registration is
//! a deterministic coordinate descent: each of the six pose parameters is
//! swept over its bounds at the current step, the best value is kept, and
//! the steps are halved once no sweep improves the score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::image::{LabelImage, ScalarImage};
use crate::transform::RigidTransform;
use crate::volume::ScalarVolume;

/// Joint intensity counts over two images.
#[derive(Clone, Debug)]
pub struct JointHistogram {
    /// Row-major B x B counts; row = first image's bin.
    pub counts: Vec<f64>,
    pub bins: usize,
    pub range_a: (f64, f64),
    pub range_b: (f64, f64),
    pub total: usize,
}

fn bin_of(v: f64, range: (f64, f64), bins: usize) -> usize {
    let (lo, hi) = range;
    if hi <= lo {
        return 0;
    }
    let t = (v - lo) / (hi - lo) * bins as f64;
    (t.max(0.0) as usize).min(bins - 1)
}

/// Joint histogram with explicit value ranges (values clamp into the edge
/// bins). `valid` restricts counting to jointly valid pixels.
pub fn joint_histogram_with_ranges(
    a: &ScalarImage,
    b: &ScalarImage,
    bins: usize,
    range_a: (f64, f64),
    range_b: (f64, f64),
    valid: Option<&[bool]>,
) -> Result<JointHistogram> {
    if bins < 2 {
        return Err(Error::config("joint histogram needs at least 2 bins"));
    }
    if a.grid() != b.grid() {
        return Err(Error::geometry("joint histogram inputs must share a grid"));
    }
    if let Some(v) = valid {
        if v.len() != a.data().len() {
            return Err(Error::shape("validity mask length must match pixel count"));
        }
    }
    let mut counts = vec![0.0f64; bins * bins];
    let mut total = 0usize;
    for i in 0..a.data().len() {
        if valid.map_or(false, |v| !v[i]) {
            continue;
        }
        let ba = bin_of(a.data()[i] as f64, range_a, bins);
        let bb = bin_of(b.data()[i] as f64, range_b, bins);
        counts[ba * bins + bb] += 1.0;
        total += 1;
    }
    if total == 0 {
        return Err(Error::data("joint histogram has no jointly valid pixels"));
    }
    Ok(JointHistogram { counts, bins, range_a, range_b, total })
}

/// Joint histogram binned over each image's own value range.
pub fn joint_histogram(
    a: &ScalarImage,
    b: &ScalarImage,
    bins: usize,
    valid: Option<&[bool]>,
) -> Result<JointHistogram> {
    let (alo, ahi) = a.min_max();
    let (blo, bhi) = b.min_max();
    joint_histogram_with_ranges(
        a,
        b,
        bins,
        (alo as f64, ahi as f64),
        (blo as f64, bhi as f64),
        valid,
    )
}

/// Mutual information in nats: sum of p(a,b) ln(p(a,b) / (p(a) p(b))) over
/// occupied joint bins.
pub fn mutual_information(h: &JointHistogram) -> f64 {
    let n = h.total as f64;
    let b = h.bins;
    let mut pa = vec![0.0f64; b];
    let mut pb = vec![0.0f64; b];
    for i in 0..b {
        for j in 0..b {
            let c = h.counts[i * b + j];
            pa[i] += c;
            pb[j] += c;
        }
    }
    let mut mi = 0.0;
    for i in 0..b {
        for j in 0..b {
            let c = h.counts[i * b + j];
            if c > 0.0 {
                let p = c / n;
                mi += p * (p / (pa[i] / n * (pb[j] / n))).ln();
            }
        }
    }
    mi.max(0.0)
}

/// A plane sampled out of a volume, with a per-pixel validity flag (false
/// where the sample point fell outside the volume).
#[derive(Clone, Debug)]
pub struct PlaneSlice {
    pub image: ScalarImage,
    pub valid: Vec<bool>,
}

/// Samples the volume on the target 2D grid carried through `t`. Pixels
/// mapping outside the volume get fill 0 and valid = false.
pub fn extract_plane_slice(vol: &ScalarVolume, t: &RigidTransform, target: Grid2) -> PlaneSlice {
    let [ny, nx] = target.dims;
    let rows: Vec<(Vec<f32>, Vec<bool>)> = (0..ny)
        .into_par_iter()
        .map(|iy| {
            let mut vals = Vec::with_capacity(nx);
            let mut valid = Vec::with_capacity(nx);
            for ix in 0..nx {
                let y = target.origin_um[0] + iy as f64 * target.spacing_um[0];
                let x = target.origin_um[1] + ix as f64 * target.spacing_um[1];
                let p = t.apply([0.0, y, x]);
                let ok = vol.contains_point(p);
                valid.push(ok);
                vals.push(if ok { vol.sample_trilinear(p, 0.0) as f32 } else { 0.0 });
            }
            (vals, valid)
        })
        .collect();
    let mut data = Vec::with_capacity(ny * nx);
    let mut valid = Vec::with_capacity(ny * nx);
    for (v, m) in rows {
        data.extend(v);
        valid.extend(m);
    }
    PlaneSlice { image: ScalarImage::new(target, data).expect("finite samples"), valid }
}

/// Search settings for [`register_slice`]. Bounds are half-widths around the
/// initial transform; steps halve per refinement level until they drop below
/// the configured minima.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegistrationConfig {
    pub bins: usize,
    pub initial: RigidTransform,
    /// Half-width of the search box per rotation axis (z, y, x), degrees.
    pub rotation_bounds_deg: [f64; 3],
    /// Half-width of the search box per translation axis (z, y, x), um.
    pub translation_bounds_um: [f64; 3],
    pub rotation_step_deg: f64,
    pub translation_step_um: f64,
    pub min_rotation_step_deg: f64,
    pub min_translation_step_um: f64,
    /// Minimum MI gain for a candidate to be accepted.
    pub tolerance: f64,
    /// Exclude pixels whose volume sample fell outside (fill pixels) from
    /// the histogram.
    pub exclude_fill: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            bins: 64,
            initial: RigidTransform::IDENTITY,
            rotation_bounds_deg: [4.0; 3],
            translation_bounds_um: [50.0; 3],
            rotation_step_deg: 1.0,
            translation_step_um: 16.0,
            min_rotation_step_deg: 0.125,
            min_translation_step_um: 1.0,
            tolerance: 1e-9,
            exclude_fill: true,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::config("registration needs at least 2 histogram bins"));
        }
        if !self.initial.is_finite() {
            return Err(Error::config("initial transform must be finite"));
        }
        for b in self.rotation_bounds_deg.iter().chain(&self.translation_bounds_um) {
            if !(*b >= 0.0) || !b.is_finite() {
                return Err(Error::config("search bounds must be finite and >= 0"));
            }
        }
        if !(self.rotation_step_deg > 0.0 && self.translation_step_um > 0.0) {
            return Err(Error::config("search steps must be positive"));
        }
        if !(self.min_rotation_step_deg > 0.0 && self.min_translation_step_um > 0.0) {
            return Err(Error::config("minimum steps must be positive"));
        }
        if !(self.tolerance >= 0.0) || !self.tolerance.is_finite() {
            return Err(Error::config("tolerance must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Registration result: the pose, its score, and the search cost.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegistrationOutcome {
    pub transform: RigidTransform,
    pub mi: f64,
    pub evaluations: usize,
}

/// The six pose parameters in sweep order.
fn params_of(t: &RigidTransform) -> [f64; 6] {
    [
        t.translation_um[0],
        t.translation_um[1],
        t.translation_um[2],
        t.rotation_deg[0],
        t.rotation_deg[1],
        t.rotation_deg[2],
    ]
}

fn transform_of(p: &[f64; 6]) -> RigidTransform {
    RigidTransform {
        rotation_deg: [p[3], p[4], p[5]],
        translation_um: [p[0], p[1], p[2]],
    }
}

/// Maximizes mutual information between `img` and the plane extracted from
/// `vol`, by coordinate descent over the six rigid parameters.
pub fn register_slice(
    vol: &ScalarVolume,
    img: &ScalarImage,
    cfg: &RegistrationConfig,
) -> Result<RegistrationOutcome> {
    cfg.validate()?;
    let range_img = {
        let (lo, hi) = img.min_max();
        (lo as f64, hi as f64)
    };
    let range_vol = vol.value_range();
    let evals = std::sync::atomic::AtomicUsize::new(0);
    let score = |t: &RigidTransform| -> f64 {
        evals.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let plane = extract_plane_slice(vol, t, *img.grid());
        let valid = if cfg.exclude_fill { Some(plane.valid.as_slice()) } else { None };
        match joint_histogram_with_ranges(
            img,
            &plane.image,
            cfg.bins,
            range_img,
            range_vol,
            valid,
        ) {
            Ok(h) => mutual_information(&h),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let mut current = params_of(&cfg.initial);
    let center = current;
    let mut best_mi = score(&transform_of(&current));
    if best_mi == f64::NEG_INFINITY {
        return Err(Error::data(
            "registration seed has no overlap between the map and the volume",
        ));
    }
    let seed_mi = best_mi;

    let bounds = [
        cfg.translation_bounds_um[0],
        cfg.translation_bounds_um[1],
        cfg.translation_bounds_um[2],
        cfg.rotation_bounds_deg[0],
        cfg.rotation_bounds_deg[1],
        cfg.rotation_bounds_deg[2],
    ];
    let mut t_step = cfg.translation_step_um;
    let mut r_step = cfg.rotation_step_deg;
    loop {
        let steps = [t_step, t_step, t_step, r_step, r_step, r_step];
        // Sweep rounds at this refinement level.
        loop {
            let mut improved = false;
            for p in 0..6 {
                if bounds[p] == 0.0 {
                    continue;
                }
                let lo = center[p] - bounds[p];
                let hi = center[p] + bounds[p];
                let mut candidates: Vec<f64> = Vec::new();
                let mut k = ((lo - current[p]) / steps[p]).ceil() as i64;
                while current[p] + k as f64 * steps[p] <= hi + 1e-12 {
                    let v = current[p] + k as f64 * steps[p];
                    if v != current[p] {
                        candidates.push(v);
                    }
                    k += 1;
                }
                if candidates.is_empty() {
                    continue;
                }
                let scores: Vec<f64> = candidates
                    .par_iter()
                    .map(|&v| {
                        let mut trial = current;
                        trial[p] = v;
                        score(&transform_of(&trial))
                    })
                    .collect();
                let (bi, &bs) = scores
                    .iter()
                    .enumerate()
                    .max_by(|(i, a), (j, b)| a.total_cmp(b).then(j.cmp(i)))
                    .unwrap();
                if bs > best_mi + cfg.tolerance {
                    current[p] = candidates[bi];
                    best_mi = bs;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        let t_done = t_step <= cfg.min_translation_step_um;
        let r_done = r_step <= cfg.min_rotation_step_deg;
        if t_done && r_done {
            break;
        }
        if !t_done {
            t_step = (t_step / 2.0).max(cfg.min_translation_step_um);
        }
        if !r_done {
            r_step = (r_step / 2.0).max(cfg.min_rotation_step_deg);
        }
    }
    debug_assert!(best_mi >= seed_mi);
    Ok(RegistrationOutcome {
        transform: transform_of(&current),
        mi: best_mi,
        evaluations: evals.into_inner(),
    })
}

/// Carries map labels into the geometry of a CT orthoslice at height
/// `slice_z_um`. Each CT pixel back-projects through the registration
/// transform and takes the nearest map label; pixels landing outside the map
/// footprint become void.
pub fn transfer_labels(
    labels: &LabelImage,
    t: &RigidTransform,
    target: Grid2,
    slice_z_um: f64,
) -> LabelImage {
    let inv = t.inverse();
    let src = labels.grid();
    let [ny, nx] = target.dims;
    let mut out = vec![0u8; ny * nx];
    for iy in 0..ny {
        for ix in 0..nx {
            let y = target.origin_um[0] + iy as f64 * target.spacing_um[0];
            let x = target.origin_um[1] + ix as f64 * target.spacing_um[1];
            // Back to map space; the out-of-plane component is dropped
            // (nearest point on the map plane).
            let p = inv.apply([slice_z_um, y, x]);
            let cy = (p[1] - src.origin_um[0]) / src.spacing_um[0];
            let cx = (p[2] - src.origin_um[1]) / src.spacing_um[1];
            let jy = cy.round();
            let jx = cx.round();
            if jy >= 0.0
                && jx >= 0.0
                && (jy as usize) < src.dims[0]
                && (jx as usize) < src.dims[1]
            {
                out[iy * nx + ix] = labels.get(jy as usize, jx as usize);
            }
        }
    }
    LabelImage::new(target, out).expect("target-sized labels")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid3;
    use crate::volume::VoxelData;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn img(grid: Grid2, data: Vec<f32>) -> ScalarImage {
        ScalarImage::new(grid, data).unwrap()
    }

    #[test]
    fn identical_two_level_images_fill_the_diagonal() {
        let grid = Grid2::isotropic([2, 2], 1.0).unwrap();
        let a = img(grid, vec![0.0, 0.0, 1.0, 1.0]);
        let h = joint_histogram(&a, &a, 2, None).unwrap();
        assert_eq!(h.counts, vec![2.0, 0.0, 0.0, 2.0]);
        assert_eq!(h.total, 4);
    }

    #[test]
    fn constant_second_image_fills_one_column() {
        let grid = Grid2::isotropic([4, 4], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = img(grid, (0..16).map(|_| rng.random::<f32>() * 10.0).collect());
        let b = img(grid, vec![3.0; 16]);
        let h = joint_histogram(&a, &b, 4, None).unwrap();
        for i in 0..4 {
            for j in 1..4 {
                assert_eq!(h.counts[i * 4 + j], 0.0);
            }
        }
        assert!((mutual_information(&h) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_matches_direct_binning() {
        let grid = Grid2::isotropic([16, 16], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let av: Vec<f32> = (0..256).map(|_| rng.random::<f32>() * 100.0).collect();
        let bv: Vec<f32> = (0..256).map(|_| rng.random::<f32>() * 50.0).collect();
        let a = img(grid, av.clone());
        let b = img(grid, bv.clone());
        let bins = 8;
        let h = joint_histogram(&a, &b, bins, None).unwrap();
        // Direct counting with the same edge conventions.
        let (alo, ahi) = a.min_max();
        let (blo, bhi) = b.min_max();
        let mut want = vec![0.0f64; bins * bins];
        for i in 0..256 {
            let ba = (((av[i] - alo) as f64 / (ahi - alo) as f64 * bins as f64) as usize)
                .min(bins - 1);
            let bb = (((bv[i] - blo) as f64 / (bhi - blo) as f64 * bins as f64) as usize)
                .min(bins - 1);
            want[ba * bins + bb] += 1.0;
        }
        assert_eq!(h.counts, want);
    }

    #[test]
    fn self_information_of_a_balanced_binary_image_is_ln2() {
        let grid = Grid2::isotropic([4, 4], 1.0).unwrap();
        let a = img(grid, (0..16).map(|i| if i < 8 { 0.0 } else { 1.0 }).collect());
        let h = joint_histogram(&a, &a, 2, None).unwrap();
        let mi = mutual_information(&h);
        assert!((mi - (2.0f64).ln()).abs() < 1e-12, "mi {mi}");
    }

    #[test]
    fn mutual_information_matches_formula_oracle() {
        let grid = Grid2::isotropic([8, 8], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = img(grid, (0..64).map(|_| rng.random::<f32>() * 9.0).collect());
        let b = img(grid, (0..64).map(|_| (rng.random::<f32>() * 9.0).floor()).collect());
        let h = joint_histogram(&a, &b, 5, None).unwrap();
        let n = h.total as f64;
        let mut want = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let pij = h.counts[i * 5 + j] / n;
                if pij == 0.0 {
                    continue;
                }
                let pi: f64 = (0..5).map(|jj| h.counts[i * 5 + jj]).sum::<f64>() / n;
                let pj: f64 = (0..5).map(|ii| h.counts[ii * 5 + j]).sum::<f64>() / n;
                want += pij * (pij / (pi * pj)).ln();
            }
        }
        assert!((mutual_information(&h) - want).abs() < 1e-9);
    }

    /// Volume with reproducible random texture.
    fn textured_volume(dims: [usize; 3], seed: u64, sigma: f64) -> ScalarVolume {
        let grid = Grid3::isotropic(dims, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0f64; grid.voxel_count()];
        for v in data.iter_mut() {
            *v = rng.random::<f64>() * 255.0;
        }
        // Smoothing sets the texture correlation length and with it the
        // width of the MI basin around the true pose.
        crate::smoothing::gaussian_blur(&mut data, &dims, sigma);
        let data: Vec<f32> = data.iter().map(|&v| v as f32).collect();
        ScalarVolume::new(grid, VoxelData::F32(data)).unwrap()
    }

    #[test]
    fn identity_extraction_reproduces_a_stored_slice() {
        let vol = textured_volume([6, 12, 12], 4, 1.0);
        let target = Grid2::from_volume_xy(vol.grid());
        let k = 3usize;
        let t = RigidTransform {
            rotation_deg: [0.0; 3],
            translation_um: [k as f64 * 10.0, 0.0, 0.0],
        };
        let plane = extract_plane_slice(&vol, &t, target);
        let want = vol.slice_z(k).unwrap();
        assert_eq!(plane.image.data(), want.data());
        assert!(plane.valid.iter().all(|&v| v));
    }

    #[test]
    fn half_voxel_between_identical_slices_is_exact() {
        let grid = Grid3::isotropic([2, 4, 4], 10.0).unwrap();
        let slice: Vec<f32> = (0..16).map(|i| i as f32 * 3.0).collect();
        let mut data = slice.clone();
        data.extend_from_slice(&slice);
        let vol = ScalarVolume::new(grid, VoxelData::F32(data)).unwrap();
        let t = RigidTransform { rotation_deg: [0.0; 3], translation_um: [5.0, 0.0, 0.0] };
        let plane = extract_plane_slice(&vol, &t, Grid2::from_volume_xy(&grid));
        assert_eq!(plane.image.data(), slice.as_slice());
    }

    #[test]
    fn ramp_volume_matches_analytic_values_under_transform() {
        let grid = Grid3::isotropic([16, 16, 16], 10.0).unwrap();
        let ramp = |p: [f64; 3]| 0.2 * p[0] + 0.3 * p[1] - 0.1 * p[2] + 40.0;
        let mut data = Vec::with_capacity(grid.voxel_count());
        for iz in 0..16 {
            for iy in 0..16 {
                for ix in 0..16 {
                    let p = grid.world_of_unchecked([iz as f64, iy as f64, ix as f64]);
                    data.push(ramp(p) as f32);
                }
            }
        }
        let vol = ScalarVolume::new(grid, VoxelData::F32(data)).unwrap();
        let t = RigidTransform {
            rotation_deg: [8.0, -5.0, 3.0],
            translation_um: [70.0, 60.0, 55.0],
        };
        let target = Grid2::new([6, 6], [10.0, 10.0], [10.0, 10.0]).unwrap();
        let plane = extract_plane_slice(&vol, &t, target);
        for iy in 0..6 {
            for ix in 0..6 {
                assert!(plane.valid[iy * 6 + ix]);
                let y = 10.0 + iy as f64 * 10.0;
                let x = 10.0 + ix as f64 * 10.0;
                let want = ramp(t.apply([0.0, y, x]));
                let got = plane.image.get(iy, ix) as f64;
                assert!(
                    (got - want).abs() < 1e-4,
                    "({iy},{ix}): got {got}, want {want}"
                );
            }
        }
    }

    fn quick_cfg(initial: RigidTransform) -> RegistrationConfig {
        RegistrationConfig {
            bins: 32,
            initial,
            rotation_bounds_deg: [3.0, 0.0, 0.0],
            translation_bounds_um: [30.0, 40.0, 40.0],
            rotation_step_deg: 1.0,
            translation_step_um: 10.0,
            min_rotation_step_deg: 0.25,
            min_translation_step_um: 1.25,
            tolerance: 1e-9,
            exclude_fill: true,
        }
    }

    #[test]
    fn search_seeded_at_the_optimum_stays_put() {
        let vol = textured_volume([10, 32, 32], 5, 1.0);
        let t0 = RigidTransform { rotation_deg: [0.0; 3], translation_um: [45.0, 5.0, -5.0] };
        let target = Grid2::new([24, 24], [10.0, 10.0], [35.0, 35.0]).unwrap();
        let fixed = extract_plane_slice(&vol, &t0, target).image;
        let out = register_slice(&vol, &fixed, &quick_cfg(t0.clone())).unwrap();
        assert_eq!(out.transform.translation_um, t0.translation_um);
        assert_eq!(out.transform.rotation_deg, t0.rotation_deg);
        assert!(out.evaluations > 6);
    }

    /// Smoothed noise quantized into flat bands: the crisp level boundaries
    /// make MI fall off quickly once sampling leaves the voxel lattice,
    /// while the ~2-voxel correlation length keeps the basin wide.
    fn banded_volume(dims: [usize; 3], seed: u64) -> ScalarVolume {
        let grid = Grid3::isotropic(dims, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.voxel_count();
        let mut data = vec![0.0f64; n];
        for v in data.iter_mut() {
            *v = rng.random::<f64>() * 255.0;
        }
        crate::smoothing::gaussian_blur(&mut data, &dims, 2.0);
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let data: Vec<f32> = data
            .iter()
            .map(|&v| ((((v - lo) / (hi - lo) * 255.0) / 43.0).floor() * 43.0) as f32)
            .collect();
        ScalarVolume::new(grid, VoxelData::F32(data)).unwrap()
    }

    #[test]
    fn perturbed_seed_recovers_the_true_pose() {
        // The true pose keeps every sample on a voxel centre (exact copy,
        // sharp MI peak) and lies on the candidate lattice: one full step
        // per translation axis and one rotation step from the seed.
        let vol = banded_volume([14, 48, 48], 6);
        let t0 = RigidTransform { rotation_deg: [0.0; 3], translation_um: [50.0, 10.0, -10.0] };
        let target = Grid2::new([40, 40], [10.0, 10.0], [50.0, 50.0]).unwrap();
        let fixed = extract_plane_slice(&vol, &t0, target).image;
        let seed = RigidTransform {
            rotation_deg: [1.0, 0.0, 0.0],
            translation_um: [60.0, 20.0, -20.0],
        };
        let cfg = RegistrationConfig { bins: 16, ..quick_cfg(seed.clone()) };
        let seed_mi = {
            let plane = extract_plane_slice(&vol, &seed, target);
            let h = joint_histogram_with_ranges(
                &fixed,
                &plane.image,
                16,
                {
                    let (lo, hi) = fixed.min_max();
                    (lo as f64, hi as f64)
                },
                vol.value_range(),
                Some(&plane.valid),
            )
            .unwrap();
            mutual_information(&h)
        };
        let out = register_slice(&vol, &fixed, &cfg).unwrap();
        for a in 0..3 {
            let err = (out.transform.translation_um[a] - t0.translation_um[a]).abs();
            assert!(err <= 5.0, "translation axis {a} off by {err} um");
            let rerr = (out.transform.rotation_deg[a] - t0.rotation_deg[a]).abs();
            assert!(rerr <= 0.5, "rotation axis {a} off by {rerr} deg");
        }
        assert!(out.mi >= seed_mi, "ascent violated: {} < {seed_mi}", out.mi);
    }

    #[test]
    fn seed_without_overlap_is_an_error() {
        let vol = textured_volume([6, 12, 12], 7, 1.0);
        let target = Grid2::from_volume_xy(vol.grid());
        let cfg = RegistrationConfig {
            initial: RigidTransform {
                rotation_deg: [0.0; 3],
                translation_um: [1e5, 1e5, 1e5],
            },
            ..quick_cfg(RigidTransform::IDENTITY)
        };
        let fixed = extract_plane_slice(&vol, &RigidTransform::IDENTITY, target).image;
        assert!(matches!(register_slice(&vol, &fixed, &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn single_label_spreads_over_the_fine_grid() {
        let src = Grid2::new([1, 1], [40.0, 40.0], [0.0, 0.0]).unwrap();
        let labels = LabelImage::new(src, vec![5]).unwrap();
        let dst = Grid2::new([4, 4], [10.0, 10.0], [-15.0, -15.0]).unwrap();
        let out = transfer_labels(&labels, &RigidTransform::IDENTITY, dst, 0.0);
        assert!(out.labels().iter().all(|&l| l == 5));
    }

    #[test]
    fn checkerboard_upsamples_to_quadrants() {
        let src = Grid2::new([2, 2], [20.0, 20.0], [0.0, 0.0]).unwrap();
        let labels = LabelImage::new(src, vec![1, 2, 3, 4]).unwrap();
        let dst = Grid2::new([4, 4], [10.0, 10.0], [-5.0, -5.0]).unwrap();
        let out = transfer_labels(&labels, &RigidTransform::IDENTITY, dst, 0.0);
        let want = vec![1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4];
        assert_eq!(out.labels(), want.as_slice());
    }

    #[test]
    fn pixels_outside_the_map_footprint_go_void() {
        let src = Grid2::new([2, 2], [10.0, 10.0], [0.0, 0.0]).unwrap();
        let labels = LabelImage::new(src, vec![1, 1, 1, 1]).unwrap();
        let dst = Grid2::new([2, 2], [10.0, 10.0], [100.0, 100.0]).unwrap();
        let out = transfer_labels(&labels, &RigidTransform::IDENTITY, dst, 0.0);
        assert!(out.labels().iter().all(|&l| l == 0));
    }
}

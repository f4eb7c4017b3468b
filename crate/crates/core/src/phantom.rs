//! Synthetic ground-truth volumes and simulated instrument images.
//!
//! A phantom is a solid cylinder along z filled with coarse ellipsoidal
//! grains, small inclusion blobs seeded in and around a host phase, and a
//! two-phase fine matrix carved out of thresholded smoothed noise. The CT
//! and XRF simulators then degrade that truth with the artefacts the
//! pipeline has to cope with: near-identical attenuations, radial
//! brightening, blur, and photon-starved count noise.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::catalog::PhaseCatalog;
use crate::elements::ELEMENT_ORDER;
use crate::error::{Error, Result};
use crate::grid::{Grid2, Grid3};
use crate::image::{ElementMapSet, LabelImage, ScalarImage};
use crate::smoothing::gaussian_blur;
use crate::volume::{LabelVolume, ScalarVolume, VoxelData};

/// Marker for in-cylinder voxels not yet claimed by a grain or blob.
const MATRIX_TBD: u8 = u8::MAX;

/// Solid cylinder footprint. The axis runs along z.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylinderSpec {
    pub radius_um: f64,
    /// Defaults to the full z extent of the grid.
    #[serde(default)]
    pub height_um: Option<f64>,
    /// Axis position (y, x) in world coordinates; defaults to the grid
    /// footprint centre.
    #[serde(default)]
    pub center_yx_um: Option<[f64; 2]>,
}

/// One coarse phase: ellipsoidal grains painted until the target volume
/// fraction is met or the grain budget runs out.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoarseGrainSpec {
    pub phase: String,
    /// Target fraction of cylinder volume, in (0, 1].
    pub target_fraction: f64,
    /// Upper bound on grains placed per painting pass.
    pub max_grains: usize,
    /// Semi-axis range [min, max] in micrometres; each axis drawn
    /// independently.
    pub radius_um: [f64; 2],
}

/// The interleaved fine-grained pair filling everything the coarse phases
/// leave behind.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub phase_a: String,
    pub phase_b: String,
    /// Share of matrix voxels given to `phase_a`, in [0, 1].
    pub fraction_a: f64,
    /// Smoothing applied to the white-noise texture field, in voxels.
    pub blur_sigma_vox: f64,
}

/// Small blobs of one phase seeded inside and on the boundary of a host
/// phase's grains.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InclusionSpec {
    pub host: String,
    pub phase: String,
    /// Target fraction of cylinder volume, in (0, 1].
    pub target_fraction: f64,
    /// Blob semi-axis range [min, max] in micrometres.
    pub radius_um: [f64; 2],
    /// Probability a blob centre sits well inside its host grain rather
    /// than at the grain boundary.
    pub interior_fraction: f64,
    pub max_blobs: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: Grid3,
    pub cylinder: CylinderSpec,
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub coarse: Vec<CoarseGrainSpec>,
    #[serde(default)]
    pub inclusion: Option<InclusionSpec>,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self, catalog: &PhaseCatalog) -> Result<()> {
        if !(self.cylinder.radius_um > 0.0) {
            return Err(Error::config("cylinder radius must be positive"));
        }
        if let Some(h) = self.cylinder.height_um {
            if !(h > 0.0) {
                return Err(Error::config("cylinder height must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.matrix.fraction_a) {
            return Err(Error::config("matrix fraction_a must lie in [0, 1]"));
        }
        if self.matrix.phase_a == self.matrix.phase_b {
            return Err(Error::config("matrix phases must be two distinct phases"));
        }
        if self.matrix.blur_sigma_vox < 0.0 {
            return Err(Error::config("matrix blur sigma must be >= 0"));
        }
        let mut claimed = 0.0;
        for c in &self.coarse {
            if !(c.target_fraction > 0.0 && c.target_fraction <= 1.0) {
                return Err(Error::config(format!(
                    "coarse fraction for {:?} must lie in (0, 1]",
                    c.phase
                )));
            }
            check_radius_range(&c.phase, c.radius_um)?;
            claimed += c.target_fraction;
        }
        for (i, c) in self.coarse.iter().enumerate() {
            if self.coarse[i + 1..].iter().any(|d| d.phase == c.phase) {
                return Err(Error::config(format!("coarse phase {:?} listed twice", c.phase)));
            }
        }
        if let Some(inc) = &self.inclusion {
            if !(inc.target_fraction > 0.0 && inc.target_fraction <= 1.0) {
                return Err(Error::config("inclusion fraction must lie in (0, 1]"));
            }
            if !(0.0..=1.0).contains(&inc.interior_fraction) {
                return Err(Error::config("inclusion interior_fraction must lie in [0, 1]"));
            }
            check_radius_range(&inc.phase, inc.radius_um)?;
            if !self.coarse.iter().any(|c| c.phase == inc.host) {
                return Err(Error::config(format!(
                    "inclusion host {:?} is not a coarse phase",
                    inc.host
                )));
            }
            claimed += inc.target_fraction;
        }
        if claimed >= 1.0 {
            return Err(Error::config(format!(
                "coarse and inclusion fractions claim {claimed:.3} of the cylinder, leaving no room for matrix"
            )));
        }
        for name in self.phase_names() {
            if catalog.phase(name).is_none() {
                return Err(Error::config(format!("phantom phase {name:?} is not in the catalog")));
            }
        }
        Ok(())
    }

    fn phase_names(&self) -> Vec<&str> {
        let mut names = vec![self.matrix.phase_a.as_str(), self.matrix.phase_b.as_str()];
        names.extend(self.coarse.iter().map(|c| c.phase.as_str()));
        if let Some(inc) = &self.inclusion {
            names.push(inc.phase.as_str());
            names.push(inc.host.as_str());
        }
        names
    }

    /// Requested fraction of cylinder volume per phase. Matrix phases split
    /// whatever the coarse and inclusion phases do not claim.
    pub fn requested_fractions(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        let mut claimed = 0.0;
        for c in &self.coarse {
            out.insert(c.phase.clone(), c.target_fraction);
            claimed += c.target_fraction;
        }
        if let Some(inc) = &self.inclusion {
            out.insert(inc.phase.clone(), inc.target_fraction);
            claimed += inc.target_fraction;
        }
        let matrix = (1.0 - claimed).max(0.0);
        out.insert(self.matrix.phase_a.clone(), matrix * self.matrix.fraction_a);
        out.insert(self.matrix.phase_b.clone(), matrix * (1.0 - self.matrix.fraction_a));
        out
    }
}

fn check_radius_range(phase: &str, range: [f64; 2]) -> Result<()> {
    if !(range[0] > 0.0 && range[1] >= range[0]) {
        return Err(Error::config(format!(
            "radius range for {phase:?} must satisfy 0 < min <= max, got {range:?}"
        )));
    }
    Ok(())
}

struct Grain {
    center: [f64; 3],
    radii: [f64; 3],
}

fn draw_range(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

/// Paints voxels inside an axis-aligned ellipsoid whose current label passes
/// `takeover`, returning the number repainted.
fn paint_ellipsoid(
    labels: &mut [u8],
    grid: &Grid3,
    center: [f64; 3],
    radii: [f64; 3],
    label: u8,
    takeover: impl Fn(u8) -> bool,
) -> usize {
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let first = (center[a] - radii[a] - grid.origin_um[a]) / grid.spacing_um[a];
        let last = (center[a] + radii[a] - grid.origin_um[a]) / grid.spacing_um[a];
        if last < 0.0 || first > (grid.dims[a] - 1) as f64 {
            return 0;
        }
        lo[a] = first.ceil().max(0.0) as usize;
        hi[a] = (last.floor() as usize).min(grid.dims[a] - 1);
    }
    let mut painted = 0;
    for iz in lo[0]..=hi[0] {
        let dz = (grid.origin_um[0] + iz as f64 * grid.spacing_um[0] - center[0]) / radii[0];
        for iy in lo[1]..=hi[1] {
            let dy = (grid.origin_um[1] + iy as f64 * grid.spacing_um[1] - center[1]) / radii[1];
            if dz * dz + dy * dy > 1.0 {
                continue;
            }
            for ix in lo[2]..=hi[2] {
                let dx =
                    (grid.origin_um[2] + ix as f64 * grid.spacing_um[2] - center[2]) / radii[2];
                if dz * dz + dy * dy + dx * dx > 1.0 {
                    continue;
                }
                let cell = &mut labels[grid.offset([iz, iy, ix])];
                if takeover(*cell) {
                    *cell = label;
                    painted += 1;
                }
            }
        }
    }
    painted
}

struct Cylinder {
    center_yx: [f64; 2],
    radius: f64,
    z_range: [f64; 2],
}

impl Cylinder {
    fn from_spec(spec: &PhantomSpec) -> Cylinder {
        let g = &spec.grid;
        let center_yx = spec.cylinder.center_yx_um.unwrap_or([
            g.origin_um[1] + (g.dims[1] - 1) as f64 / 2.0 * g.spacing_um[1],
            g.origin_um[2] + (g.dims[2] - 1) as f64 / 2.0 * g.spacing_um[2],
        ]);
        let z_lo = g.origin_um[0];
        let z_hi = g.origin_um[0] + (g.dims[0] - 1) as f64 * g.spacing_um[0];
        let z_range = match spec.cylinder.height_um {
            None => [z_lo, z_hi],
            Some(h) => {
                let zc = (z_lo + z_hi) / 2.0;
                [zc - h / 2.0, zc + h / 2.0]
            }
        };
        Cylinder { center_yx, radius: spec.cylinder.radius_um, z_range }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        let dy = p[1] - self.center_yx[0];
        let dx = p[2] - self.center_yx[1];
        p[0] >= self.z_range[0]
            && p[0] <= self.z_range[1]
            && dy * dy + dx * dx <= self.radius * self.radius
    }

    /// Uniform point inside the cylinder (rejection sampling on the disc).
    fn sample_point(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let z = if self.z_range[0] == self.z_range[1] {
            self.z_range[0]
        } else {
            rng.random_range(self.z_range[0]..self.z_range[1])
        };
        loop {
            let dy = rng.random_range(-self.radius..self.radius);
            let dx = rng.random_range(-self.radius..self.radius);
            if dy * dy + dx * dx <= self.radius * self.radius {
                return [z, self.center_yx[0] + dy, self.center_yx[1] + dx];
            }
        }
    }
}

/// Places grains of `spec` until the painted count reaches `target` or the
/// per-pass grain budget is spent.
fn place_coarse_pass(
    labels: &mut [u8],
    grid: &Grid3,
    cyl: &Cylinder,
    spec: &CoarseGrainSpec,
    label: u8,
    target: usize,
    painted: &mut usize,
    grains: &mut Vec<Grain>,
    rng: &mut ChaCha8Rng,
) {
    let mut placed = 0;
    while *painted < target && placed < spec.max_grains {
        let center = cyl.sample_point(rng);
        let radii = [
            draw_range(rng, spec.radius_um),
            draw_range(rng, spec.radius_um),
            draw_range(rng, spec.radius_um),
        ];
        *painted += paint_ellipsoid(labels, grid, center, radii, label, |l| l == MATRIX_TBD);
        grains.push(Grain { center, radii });
        placed += 1;
    }
}

/// Builds the ground-truth label volume. Voxels outside the cylinder are
/// void (0); each catalog phase keeps its positional label. The returned
/// catalog carries the realized abundances.
pub fn generate_phantom(
    spec: &PhantomSpec,
    catalog: &PhaseCatalog,
) -> Result<(LabelVolume, PhaseCatalog)> {
    catalog.validate()?;
    spec.validate(catalog)?;
    if catalog.phases.len() >= MATRIX_TBD as usize {
        return Err(Error::config("phase catalog too large for phantom generation"));
    }
    let grid = spec.grid;
    let cyl = Cylinder::from_spec(spec);
    let mut labels = vec![0u8; grid.voxel_count()];
    let mut cyl_count = 0usize;
    for iz in 0..grid.dims[0] {
        for iy in 0..grid.dims[1] {
            for ix in 0..grid.dims[2] {
                let p = grid.world_of_unchecked([iz as f64, iy as f64, ix as f64]);
                if cyl.contains(p) {
                    labels[grid.offset([iz, iy, ix])] = MATRIX_TBD;
                    cyl_count += 1;
                }
            }
        }
    }
    if cyl_count == 0 {
        return Err(Error::config("cylinder does not cover any voxel centre"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let label_of = |name: &str| catalog.label_of(name).expect("validated phase name");

    // First pass: coarse grains in listed order.
    let mut painted: BTreeMap<String, usize> = BTreeMap::new();
    let mut host_grains: Vec<Grain> = Vec::new();
    let mut targets: BTreeMap<String, usize> = BTreeMap::new();
    for c in &spec.coarse {
        let target = (c.target_fraction * cyl_count as f64).round() as usize;
        targets.insert(c.phase.clone(), target);
        let mut count = 0;
        let mut grains = Vec::new();
        place_coarse_pass(
            &mut labels,
            &grid,
            &cyl,
            c,
            label_of(&c.phase),
            target,
            &mut count,
            &mut grains,
            &mut rng,
        );
        painted.insert(c.phase.clone(), count);
        if let Some(inc) = &spec.inclusion {
            if inc.host == c.phase {
                host_grains = grains;
            }
        }
    }

    // Inclusion blobs around host grains; they may eat into the host.
    if let Some(inc) = &spec.inclusion {
        if host_grains.is_empty() {
            return Err(Error::data(format!(
                "no {:?} grains were placed to host {:?} inclusions",
                inc.host, inc.phase
            )));
        }
        let host_label = label_of(&inc.host);
        let inc_label = label_of(&inc.phase);
        let target = (inc.target_fraction * cyl_count as f64).round() as usize;
        let mut count = 0;
        let mut blobs = 0;
        while count < target && blobs < inc.max_blobs {
            let grain = &host_grains[rng.random_range(0..host_grains.len())];
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let t = if rng.random_bool(inc.interior_fraction) {
                rng.random_range(0.0..0.7)
            } else {
                rng.random_range(0.7..1.05)
            };
            let center = [
                grain.center[0] + t * dir[0] * grain.radii[0],
                grain.center[1] + t * dir[1] * grain.radii[1],
                grain.center[2] + t * dir[2] * grain.radii[2],
            ];
            let radii = [
                draw_range(&mut rng, inc.radius_um),
                draw_range(&mut rng, inc.radius_um),
                draw_range(&mut rng, inc.radius_um),
            ];
            count += paint_ellipsoid(&mut labels, &grid, center, radii, inc_label, |l| {
                l == MATRIX_TBD || l == host_label
            });
            blobs += 1;
        }
        painted.insert(inc.phase.clone(), count);
        // Recount hosts the blobs swallowed, then top the host back up.
        let host_count = labels.iter().filter(|&&l| l == host_label).count();
        painted.insert(inc.host.clone(), host_count);
    }

    // Second pass: restore coarse phases the inclusions ate into.
    for c in &spec.coarse {
        let target = targets[&c.phase];
        let mut count = painted[&c.phase];
        if count < target {
            let mut grains = Vec::new();
            place_coarse_pass(
                &mut labels,
                &grid,
                &cyl,
                c,
                label_of(&c.phase),
                target,
                &mut count,
                &mut grains,
                &mut rng,
            );
            painted.insert(c.phase.clone(), count);
        }
    }

    // Matrix pair: threshold a smoothed noise field so phase_a gets exactly
    // its share of the leftover voxels.
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise: Vec<f64> =
        (0..grid.voxel_count()).map(|_| normal.sample(&mut rng)).collect();
    gaussian_blur(&mut noise, &grid.dims, spec.matrix.blur_sigma_vox);
    let mut remaining: Vec<usize> =
        (0..labels.len()).filter(|&i| labels[i] == MATRIX_TBD).collect();
    remaining.sort_by(|&a, &b| noise[a].total_cmp(&noise[b]).then(a.cmp(&b)));
    let n_a = (spec.matrix.fraction_a * remaining.len() as f64).round() as usize;
    let label_a = label_of(&spec.matrix.phase_a);
    let label_b = label_of(&spec.matrix.phase_b);
    for (rank, &i) in remaining.iter().enumerate() {
        labels[i] = if rank < n_a { label_a } else { label_b };
    }

    let mut realized: BTreeMap<String, f64> = BTreeMap::new();
    let mut counts = vec![0usize; catalog.phases.len() + 1];
    for &l in &labels {
        if (l as usize) < counts.len() {
            counts[l as usize] += 1;
        }
    }
    for (i, phase) in catalog.phases.iter().enumerate() {
        realized.insert(phase.name.clone(), counts[i + 1] as f64 / cyl_count as f64 * 100.0);
    }
    let volume = LabelVolume::new(grid, labels)?;
    Ok((volume, catalog.with_realized(realized)))
}

/// CT acquisition model: per-phase attenuation, quadratic radial
/// brightening, Gaussian noise, and isotropic blur.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CtSimParams {
    /// Mean 8-bit attenuation per phase name; void stays 0.
    pub attenuation: BTreeMap<String, f64>,
    pub noise_sigma: f64,
    /// Fractional brightening at the cylinder rim, in [0, 0.5].
    pub beam_hardening: f64,
    pub blur_sigma_vox: f64,
}

impl CtSimParams {
    pub fn validate(&self) -> Result<()> {
        for (name, &a) in &self.attenuation {
            if !(1.0..=255.0).contains(&a) {
                return Err(Error::config(format!(
                    "attenuation for {name:?} must lie in [1, 255], got {a}"
                )));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::config("CT noise sigma must be >= 0"));
        }
        if !(0.0..=0.5).contains(&self.beam_hardening) {
            return Err(Error::config("beam hardening amplitude must lie in [0, 0.5]"));
        }
        if self.blur_sigma_vox < 0.0 {
            return Err(Error::config("CT blur sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Simulates the tomogram for a truth volume. The radial brightening is
/// measured from the solid footprint: its axis is the nonvoid centroid and
/// its radius the farthest nonvoid voxel.
pub fn simulate_ct(
    truth: &LabelVolume,
    catalog: &PhaseCatalog,
    params: &CtSimParams,
    seed: u64,
) -> Result<ScalarVolume> {
    params.validate()?;
    let grid = *truth.grid();
    let mut atten = vec![None::<f64>; 256];
    atten[0] = Some(0.0);
    for &l in truth.labels() {
        if atten[l as usize].is_some() {
            continue;
        }
        let phase = catalog
            .phase_of_label(l)
            .ok_or_else(|| Error::config(format!("truth label {l} is not in the catalog")))?;
        let a = params.attenuation.get(&phase.name).ok_or_else(|| {
            Error::config(format!("no attenuation configured for phase {:?}", phase.name))
        })?;
        atten[l as usize] = Some(*a);
    }

    // Footprint of the solid sample in the xy plane.
    let mut sum_y = 0.0;
    let mut sum_x = 0.0;
    let mut n_solid = 0usize;
    for iz in 0..grid.dims[0] {
        for iy in 0..grid.dims[1] {
            for ix in 0..grid.dims[2] {
                if truth.label_at([iz, iy, ix]) != 0 {
                    let p = grid.world_of_unchecked([iz as f64, iy as f64, ix as f64]);
                    sum_y += p[1];
                    sum_x += p[2];
                    n_solid += 1;
                }
            }
        }
    }
    if n_solid == 0 {
        return Err(Error::data("truth volume contains no solid voxels"));
    }
    let cy = sum_y / n_solid as f64;
    let cx = sum_x / n_solid as f64;
    let mut r2_max = 0.0f64;
    if params.beam_hardening > 0.0 {
        for iz in 0..grid.dims[0] {
            for iy in 0..grid.dims[1] {
                for ix in 0..grid.dims[2] {
                    if truth.label_at([iz, iy, ix]) != 0 {
                        let p = grid.world_of_unchecked([iz as f64, iy as f64, ix as f64]);
                        let r2 = (p[1] - cy).powi(2) + (p[2] - cx).powi(2);
                        r2_max = r2_max.max(r2);
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if params.noise_sigma > 0.0 {
        Some(Normal::new(0.0, params.noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    let mut data = vec![0.0f64; grid.voxel_count()];
    let mut i = 0;
    for iz in 0..grid.dims[0] {
        for iy in 0..grid.dims[1] {
            for ix in 0..grid.dims[2] {
                let base = atten[truth.labels()[i] as usize].expect("checked above");
                let mut v = base;
                if params.beam_hardening > 0.0 && base > 0.0 && r2_max > 0.0 {
                    let p = grid.world_of_unchecked([iz as f64, iy as f64, ix as f64]);
                    let r2 = (p[1] - cy).powi(2) + (p[2] - cx).powi(2);
                    v *= 1.0 + params.beam_hardening * r2 / r2_max;
                }
                if let Some(n) = &noise {
                    v += n.sample(&mut rng);
                }
                data[i] = v;
                i += 1;
            }
        }
    }
    gaussian_blur(&mut data, &grid.dims, params.blur_sigma_vox);
    let data: Vec<f32> = data.iter().map(|&v| v.clamp(0.0, 255.0) as f32).collect();
    ScalarVolume::new(grid, VoxelData::F32(data))
}

/// XRF acquisition model: per-phase expected counts per element, optional
/// Poisson count noise, and detector blur.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct XrfSimParams {
    /// Emitted element maps, in output order.
    #[serde(default = "default_elements")]
    pub elements: Vec<String>,
    /// Expected 8-bit count per phase per element; missing entries mean 0.
    pub expected_counts: BTreeMap<String, BTreeMap<String, f64>>,
    /// Elements with Poisson count noise, mapped to a dwell scale: counts
    /// are drawn as Poisson(expected * scale) / scale.
    #[serde(default)]
    pub noisy_elements: BTreeMap<String, f64>,
    pub blur_sigma_px: f64,
}

fn default_elements() -> Vec<String> {
    ELEMENT_ORDER.iter().map(|s| s.to_string()).collect()
}

impl XrfSimParams {
    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::config("XRF simulation needs at least one element"));
        }
        for (i, el) in self.elements.iter().enumerate() {
            if self.elements[i + 1..].iter().any(|e| e == el) {
                return Err(Error::config(format!("element {el:?} listed twice")));
            }
        }
        for (phase, counts) in &self.expected_counts {
            for (el, &c) in counts {
                if !(0.0..=255.0).contains(&c) {
                    return Err(Error::config(format!(
                        "expected count for {phase:?}/{el:?} must lie in [0, 255], got {c}"
                    )));
                }
                if !self.elements.iter().any(|e| e == el) {
                    return Err(Error::config(format!(
                        "count for {phase:?} names unknown element {el:?}"
                    )));
                }
            }
        }
        for (el, &scale) in &self.noisy_elements {
            if !self.elements.iter().any(|e| e == el) {
                return Err(Error::config(format!("noisy element {el:?} is not emitted")));
            }
            if !(scale > 0.0) {
                return Err(Error::config(format!("noise scale for {el:?} must be positive")));
            }
        }
        if self.blur_sigma_px < 0.0 {
            return Err(Error::config("XRF blur sigma must be >= 0"));
        }
        Ok(())
    }

    fn expected(&self, phase: &str, element: &str) -> f64 {
        self.expected_counts.get(phase).and_then(|c| c.get(element)).copied().unwrap_or(0.0)
    }
}

/// Simulates the element maps for one truth slice. The slice is first
/// downsampled to the detector grid by majority vote.
pub fn simulate_xrf(
    truth_slice: &LabelImage,
    catalog: &PhaseCatalog,
    params: &XrfSimParams,
    target: Grid2,
    seed: u64,
) -> Result<ElementMapSet> {
    params.validate()?;
    let src = truth_slice.grid();
    for a in 0..2 {
        if src.spacing_um[a] > target.spacing_um[a] * (1.0 + 1e-9) {
            return Err(Error::geometry(format!(
                "truth slice spacing {:?} is coarser than the detector grid {:?}",
                src.spacing_um, target.spacing_um
            )));
        }
    }
    let coarse = crate::preprocess::downsample_labels_majority(truth_slice, target)?;
    for &l in coarse.labels() {
        if l != 0 && catalog.phase_of_label(l).is_none() {
            return Err(Error::config(format!("truth label {l} is not in the catalog")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [ny, nx] = target.dims;
    let mut entries = Vec::with_capacity(params.elements.len());
    for el in &params.elements {
        let mut expected_by_label = vec![0.0f64; 256];
        for (i, phase) in catalog.phases.iter().enumerate() {
            expected_by_label[i + 1] = params.expected(&phase.name, el);
        }
        let scale = params.noisy_elements.get(el).copied();
        let mut data = vec![0.0f64; ny * nx];
        for (i, &l) in coarse.labels().iter().enumerate() {
            let expected = expected_by_label[l as usize];
            data[i] = match scale {
                Some(s) => {
                    let lambda = expected * s;
                    if lambda > 0.0 {
                        Poisson::new(lambda).expect("positive lambda").sample(&mut rng) / s
                    } else {
                        0.0
                    }
                }
                None => expected,
            };
        }
        gaussian_blur(&mut data, &[ny, nx], params.blur_sigma_px);
        let data: Vec<f32> = data.iter().map(|&v| v.clamp(0.0, 255.0) as f32).collect();
        entries.push((el.clone(), ScalarImage::new(target, data)?));
    }
    ElementMapSet::new(target, entries, None)
}

//! Training-patch extraction and geometric augmentation.

use crate::error::{Error, Result};
use crate::image::{LabelImage, ScalarImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One square training example. Pixel values are copied from the source
/// image as-is; callers normalize beforehand.
#[derive(Clone, Debug)]
pub struct Patch {
    pub size: usize,
    pub pixels: Vec<f64>,
    pub labels: Vec<u8>,
    /// (y, x) of the patch's top-left corner in the source image.
    pub origin_yx: [usize; 2],
}

/// Tile start offsets along one axis: multiples of `step` while a full patch
/// fits, plus a final border-aligned offset so the last pixels are covered.
pub(crate) fn tile_offsets(dim: usize, patch: usize, step: usize) -> Vec<usize> {
    debug_assert!(patch <= dim && step >= 1);
    let mut offs = Vec::new();
    let mut o = 0;
    while o + patch <= dim {
        offs.push(o);
        o += step;
    }
    let last = dim - patch;
    if *offs.last().expect("at least offset 0") != last {
        offs.push(last);
    }
    offs
}

/// Cuts a slice and its label plane into square patches. Patches whose
/// labels are entirely void (0) carry no training signal and are dropped.
pub fn extract_patches(
    image: &ScalarImage,
    labels: &LabelImage,
    patch: usize,
    step: usize,
) -> Result<Vec<Patch>> {
    if image.grid() != labels.grid() {
        return Err(Error::geometry("patch image and label grids differ"));
    }
    if step == 0 {
        return Err(Error::config("patch step must be at least 1"));
    }
    let [h, w] = image.grid().dims;
    if patch == 0 || patch > h || patch > w {
        return Err(Error::shape(format!(
            "patch size {patch} does not fit a {h}x{w} slice"
        )));
    }
    let mut out = Vec::new();
    for &oy in &tile_offsets(h, patch, step) {
        for &ox in &tile_offsets(w, patch, step) {
            let mut pixels = Vec::with_capacity(patch * patch);
            let mut labs = Vec::with_capacity(patch * patch);
            for y in 0..patch {
                for x in 0..patch {
                    pixels.push(image.get(oy + y, ox + x) as f64);
                    labs.push(labels.get(oy + y, ox + x));
                }
            }
            if labs.iter().all(|&l| l == 0) {
                continue;
            }
            out.push(Patch { size: patch, pixels, labels: labs, origin_yx: [oy, ox] });
        }
    }
    Ok(out)
}

/// Which random transforms an augmentation pass may compose. Exact flips
/// and quarter turns are index permutations; zoom and shear resample
/// (bilinear for pixels, nearest for labels).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Clockwise quarter-turn angles allowed, each from {90, 180, 270}.
    pub rotations: Vec<u16>,
    /// Scale factor range, drawn uniformly; [1, 1] disables zoom.
    pub zoom: [f64; 2],
    /// Shear angle drawn uniformly from [-shear_deg, shear_deg]; 0 disables.
    pub shear_deg: f64,
    /// Number of transformed copies appended per source patch.
    pub copies: usize,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            flip_horizontal: true,
            flip_vertical: true,
            rotations: vec![90, 180],
            zoom: [0.9, 1.1],
            shear_deg: 2.0,
            copies: 10,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rotations.iter().any(|r| !matches!(r, 90 | 180 | 270)) {
            return Err(Error::config("rotations must be quarter turns (90, 180, 270)"));
        }
        if !(self.zoom[0] > 0.0 && self.zoom[0] <= self.zoom[1] && self.zoom[1].is_finite()) {
            return Err(Error::config("zoom range must satisfy 0 < lo <= hi"));
        }
        if !(0.0..45.0).contains(&self.shear_deg) {
            return Err(Error::config("shear angle must lie in [0, 45) degrees"));
        }
        Ok(())
    }

    fn is_identity(&self) -> bool {
        !self.flip_horizontal
            && !self.flip_vertical
            && self.rotations.is_empty()
            && self.zoom == [1.0, 1.0]
            && self.shear_deg == 0.0
    }
}

pub(crate) fn flip_lr<T: Copy>(d: &[T], p: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(d.len());
    for y in 0..p {
        for x in 0..p {
            out.push(d[y * p + (p - 1 - x)]);
        }
    }
    out
}

pub(crate) fn flip_ud<T: Copy>(d: &[T], p: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(d.len());
    for y in 0..p {
        out.extend_from_slice(&d[(p - 1 - y) * p..(p - y) * p]);
    }
    out
}

/// Quarter turn clockwise: the top-left corner moves to the top-right.
pub(crate) fn rot_cw<T: Copy>(d: &[T], p: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(d.len());
    for y in 0..p {
        for x in 0..p {
            out.push(d[(p - 1 - x) * p + y]);
        }
    }
    out
}

/// Zoom + shear about the patch centre. Each output pixel back-projects
/// through the inverse affine map; sources are clamped to the patch edge.
fn affine_resample(
    pixels: &[f64],
    labels: &[u8],
    p: usize,
    zoom: f64,
    shear_rad: f64,
) -> (Vec<f64>, Vec<u8>) {
    let c = (p as f64 - 1.0) / 2.0;
    let t = shear_rad.tan();
    let mut out_px = Vec::with_capacity(p * p);
    let mut out_lb = Vec::with_capacity(p * p);
    let clampf = |v: f64| v.clamp(0.0, p as f64 - 1.0);
    for y in 0..p {
        for x in 0..p {
            // Forward map is [y'; x'] = zoom * [[1,0],[t,1]] [y-c; x-c] + c,
            // so the inverse is (1/zoom) * [[1,0],[-t,1]].
            let dy = (y as f64 - c) / zoom;
            let dx = (x as f64 - c) / zoom;
            let u = clampf(dy + c);
            let v = clampf(-t * dy + dx + c);
            let (y0, x0) = (u.floor() as usize, v.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(p - 1), (x0 + 1).min(p - 1));
            let (fy, fx) = (u - y0 as f64, v - x0 as f64);
            let lerp = |a: f64, b: f64, f: f64| a + (b - a) * f;
            let top = lerp(pixels[y0 * p + x0], pixels[y0 * p + x1], fx);
            let bot = lerp(pixels[y1 * p + x0], pixels[y1 * p + x1], fx);
            out_px.push(lerp(top, bot, fy));
            let (yn, xn) = (u.round() as usize, v.round() as usize);
            out_lb.push(labels[yn.min(p - 1) * p + xn.min(p - 1)]);
        }
    }
    (out_px, out_lb)
}

fn transform_patch(patch: &Patch, spec: &AugmentationSpec, rng: &mut ChaCha8Rng) -> Patch {
    let p = patch.size;
    let mut px = patch.pixels.clone();
    let mut lb = patch.labels.clone();
    if spec.flip_horizontal && rng.random_bool(0.5) {
        px = flip_lr(&px, p);
        lb = flip_lr(&lb, p);
    }
    if spec.flip_vertical && rng.random_bool(0.5) {
        px = flip_ud(&px, p);
        lb = flip_ud(&lb, p);
    }
    if !spec.rotations.is_empty() {
        // Index 0 leaves the patch unrotated.
        let pick = rng.random_range(0..=spec.rotations.len());
        if pick > 0 {
            let turns = spec.rotations[pick - 1] / 90;
            for _ in 0..turns {
                px = rot_cw(&px, p);
                lb = rot_cw(&lb, p);
            }
        }
    }
    let zoom = if spec.zoom[0] < spec.zoom[1] {
        rng.random_range(spec.zoom[0]..spec.zoom[1])
    } else {
        spec.zoom[0]
    };
    let shear = if spec.shear_deg > 0.0 {
        rng.random_range(-spec.shear_deg..spec.shear_deg).to_radians()
    } else {
        0.0
    };
    if zoom != 1.0 || shear != 0.0 {
        (px, lb) = affine_resample(&px, &lb, p, zoom, shear);
    }
    Patch { size: p, pixels: px, labels: lb, origin_yx: patch.origin_yx }
}

/// Expands a patch set to originals plus `copies` independently transformed
/// variants of each patch, drawn deterministically from `seed`.
pub fn augment(patches: &[Patch], spec: &AugmentationSpec, seed: u64) -> Result<Vec<Patch>> {
    spec.validate()?;
    let mut out = patches.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..spec.copies {
        for patch in patches {
            if spec.is_identity() {
                out.push(patch.clone());
            } else {
                out.push(transform_patch(patch, spec, &mut rng));
            }
        }
    }
    Ok(out)
}

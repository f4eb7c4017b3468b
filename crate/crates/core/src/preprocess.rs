//! Map conditioning ahead of clustering and training: edge-preserving
//! denoising, 8-bit normalization, grid resampling, and sample cropping.

use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::image::{ElementMapSet, LabelImage, ScalarImage};

/// Bilateral filter parameters. The kernel window is truncated at
/// `radius` pixels (default 3 spatial sigmas, rounded up).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BilateralParams {
    pub spatial_sigma_px: f64,
    pub range_sigma: f64,
    #[serde(default)]
    pub radius_px: Option<usize>,
}

impl BilateralParams {
    pub fn new(spatial_sigma_px: f64, range_sigma: f64) -> Result<Self> {
        let p = BilateralParams { spatial_sigma_px, range_sigma, radius_px: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spatial_sigma_px > 0.0) || !(self.range_sigma > 0.0) {
            return Err(Error::config(format!(
                "bilateral sigmas must be positive, got spatial {} range {}",
                self.spatial_sigma_px, self.range_sigma
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.radius_px.unwrap_or((3.0 * self.spatial_sigma_px).ceil() as usize)
    }
}

/// Edge-preserving smoothing: each output pixel is the range-and-distance
/// weighted mean of its window. Borders renormalize over in-bounds pixels
/// (window clipping), so no data is invented past the image edge.
pub fn bilateral_filter(img: &ScalarImage, p: &BilateralParams) -> Result<ScalarImage> {
    p.validate()?;
    let [ny, nx] = img.grid().dims;
    let r = self::bilateral_radius_capped(p, ny.max(nx));
    let inv2ss = 1.0 / (2.0 * p.spatial_sigma_px * p.spatial_sigma_px);
    let inv2sr = 1.0 / (2.0 * p.range_sigma * p.range_sigma);
    // Spatial weights depend only on the offset; precompute the window.
    let mut spatial = vec![0.0f64; (2 * r + 1) * (2 * r + 1)];
    for dy in -(r as isize)..=(r as isize) {
        for dx in -(r as isize)..=(r as isize) {
            let d2 = (dy * dy + dx * dx) as f64;
            spatial[((dy + r as isize) as usize) * (2 * r + 1) + (dx + r as isize) as usize] =
                (-d2 * inv2ss).exp();
        }
    }
    let mut out = vec![0.0f32; ny * nx];
    for y in 0..ny {
        for x in 0..nx {
            let centre = img.get(y, x) as f64;
            let y0 = y.saturating_sub(r);
            let y1 = (y + r).min(ny - 1);
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(nx - 1);
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for wy in y0..=y1 {
                let sy = (wy as isize - y as isize + r as isize) as usize;
                for wx in x0..=x1 {
                    let sx = (wx as isize - x as isize + r as isize) as usize;
                    let v = img.get(wy, wx) as f64;
                    let dv = v - centre;
                    let w = spatial[sy * (2 * r + 1) + sx] * (-dv * dv * inv2sr).exp();
                    num += w * v;
                    den += w;
                }
            }
            out[y * nx + x] = (num / den) as f32;
        }
    }
    ScalarImage::new(*img.grid(), out)
}

fn bilateral_radius_capped(p: &BilateralParams, max_dim: usize) -> usize {
    p.radius().min(max_dim)
}

/// Linear map of [min, max] onto [0, 255], rounded half away from zero.
/// A constant image maps to all zeros.
pub fn normalize_8bit(img: &ScalarImage) -> ScalarImage {
    let (lo, hi) = img.min_max();
    normalize_8bit_with_range(img, lo as f64, hi as f64)
}

/// Same mapping with an externally fixed range (e.g. a whole-volume range so
/// every orthoslice shares one intensity scale); values outside clamp.
pub fn normalize_8bit_with_range(img: &ScalarImage, lo: f64, hi: f64) -> ScalarImage {
    let grid = *img.grid();
    if !(hi > lo) {
        return ScalarImage::filled(grid, 0.0);
    }
    let scale = 255.0 / (hi - lo);
    let data = img
        .data()
        .iter()
        .map(|&v| (((v as f64 - lo) * scale).clamp(0.0, 255.0)).round() as f32)
        .collect();
    ScalarImage::new(grid, data).expect("normalized data is finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleMode {
    /// Fine -> coarse: destination pixel = mean of covering source pixels,
    /// weighted by geometric overlap.
    BlockAverage,
    /// Coarse -> fine scalar interpolation at destination pixel centres.
    Bilinear,
    /// Nearest source pixel; the only mode valid for labels.
    Nearest,
}

/// Pixel footprint along one axis: centre convention, so pixel i covers
/// [origin + (i-1/2) s, origin + (i+1/2) s).
fn footprint(origin: f64, spacing: f64, i: f64) -> (f64, f64) {
    (origin + (i - 0.5) * spacing, origin + (i + 0.5) * spacing)
}

/// Per-destination-pixel overlap weights against source pixels on one axis.
fn axis_overlaps(
    n_src: usize,
    o_src: f64,
    s_src: f64,
    n_dst: usize,
    o_dst: f64,
    s_dst: f64,
) -> Vec<Vec<(usize, f64)>> {
    let mut table = Vec::with_capacity(n_dst);
    for j in 0..n_dst {
        let (lo, hi) = footprint(o_dst, s_dst, j as f64);
        // Source pixels whose footprint intersects [lo, hi).
        let first = (((lo - o_src) / s_src) + 0.5).floor().max(0.0) as usize;
        let mut row = Vec::new();
        let mut i = first;
        while i < n_src {
            let (slo, shi) = footprint(o_src, s_src, i as f64);
            if slo >= hi {
                break;
            }
            let ov = (hi.min(shi) - lo.max(slo)).max(0.0);
            if ov > 0.0 {
                row.push((i, ov));
            }
            i += 1;
        }
        table.push(row);
    }
    table
}

pub fn resample_to_grid(img: &ScalarImage, dst: Grid2, mode: ResampleMode) -> Result<ScalarImage> {
    let src = img.grid();
    ensure_overlap(src, &dst)?;
    let [ny, nx] = dst.dims;
    let mut out = vec![0.0f32; ny * nx];
    match mode {
        ResampleMode::BlockAverage => {
            let wy = axis_overlaps(
                src.dims[0], src.origin_um[0], src.spacing_um[0],
                ny, dst.origin_um[0], dst.spacing_um[0],
            );
            let wx = axis_overlaps(
                src.dims[1], src.origin_um[1], src.spacing_um[1],
                nx, dst.origin_um[1], dst.spacing_um[1],
            );
            for j in 0..ny {
                for i in 0..nx {
                    let mut num = 0.0f64;
                    let mut den = 0.0f64;
                    for &(sy, oy) in &wy[j] {
                        for &(sx, ox) in &wx[i] {
                            let w = oy * ox;
                            num += w * img.get(sy, sx) as f64;
                            den += w;
                        }
                    }
                    out[j * nx + i] = if den > 0.0 { (num / den) as f32 } else { 0.0 };
                }
            }
        }
        ResampleMode::Bilinear => {
            for j in 0..ny {
                for i in 0..nx {
                    let w = dst.world_of([j, i]).expect("in-range index");
                    let ci = src.continuous_index(w);
                    let inside = ci[0] >= -0.5
                        && ci[0] <= src.dims[0] as f64 - 0.5
                        && ci[1] >= -0.5
                        && ci[1] <= src.dims[1] as f64 - 0.5;
                    out[j * nx + i] = if inside {
                        let cy = ci[0].clamp(0.0, (src.dims[0] - 1) as f64);
                        let cx = ci[1].clamp(0.0, (src.dims[1] - 1) as f64);
                        img.sample_bilinear_index(cy, cx, 0.0)
                    } else {
                        0.0
                    };
                }
            }
        }
        ResampleMode::Nearest => {
            for j in 0..ny {
                for i in 0..nx {
                    let w = dst.world_of([j, i]).expect("in-range index");
                    out[j * nx + i] = nearest_value(img, src, w).unwrap_or(0.0);
                }
            }
        }
    }
    ScalarImage::new(dst, out)
}

fn nearest_value(img: &ScalarImage, src: &Grid2, w: [f64; 2]) -> Option<f32> {
    let ci = src.continuous_index(w);
    let inside = ci[0] >= -0.5
        && ci[0] < src.dims[0] as f64 - 0.5 + 1.0
        && ci[1] >= -0.5
        && ci[1] < src.dims[1] as f64 - 0.5 + 1.0;
    if !inside {
        return None;
    }
    let y = ci[0].round().clamp(0.0, (src.dims[0] - 1) as f64) as usize;
    let x = ci[1].round().clamp(0.0, (src.dims[1] - 1) as f64) as usize;
    Some(img.get(y, x))
}

fn ensure_overlap(a: &Grid2, b: &Grid2) -> Result<()> {
    let (alo_y, ahi_y) = (a.origin_um[0] - 0.5 * a.spacing_um[0], a.origin_um[0] + (a.dims[0] as f64 - 0.5) * a.spacing_um[0]);
    let (alo_x, ahi_x) = (a.origin_um[1] - 0.5 * a.spacing_um[1], a.origin_um[1] + (a.dims[1] as f64 - 0.5) * a.spacing_um[1]);
    let (blo_y, bhi_y) = (b.origin_um[0] - 0.5 * b.spacing_um[0], b.origin_um[0] + (b.dims[0] as f64 - 0.5) * b.spacing_um[0]);
    let (blo_x, bhi_x) = (b.origin_um[1] - 0.5 * b.spacing_um[1], b.origin_um[1] + (b.dims[1] as f64 - 0.5) * b.spacing_um[1]);
    if alo_y >= bhi_y || blo_y >= ahi_y || alo_x >= bhi_x || blo_x >= ahi_x {
        return Err(Error::geometry("resample grids do not overlap".to_string()));
    }
    Ok(())
}

/// Nearest-neighbour label resample; destination pixels outside the source
/// footprint become void.
pub fn resample_labels_nearest(labels: &LabelImage, dst: Grid2) -> Result<LabelImage> {
    let src = labels.grid();
    ensure_overlap(src, &dst)?;
    let [ny, nx] = dst.dims;
    let mut out = vec![0u8; ny * nx];
    for j in 0..ny {
        for i in 0..nx {
            let w = dst.world_of([j, i]).expect("in-range index");
            let ci = src.continuous_index(w);
            let inside = ci[0] >= -0.5
                && ci[0] < src.dims[0] as f64 - 0.5 + 1.0
                && ci[1] >= -0.5
                && ci[1] < src.dims[1] as f64 - 0.5 + 1.0;
            if inside {
                let y = ci[0].round().clamp(0.0, (src.dims[0] - 1) as f64) as usize;
                let x = ci[1].round().clamp(0.0, (src.dims[1] - 1) as f64) as usize;
                out[j * nx + i] = labels.get(y, x);
            }
        }
    }
    LabelImage::new(dst, out)
}

/// Fine -> coarse label resample by majority vote over the source pixel
/// centres covered by each destination pixel; ties pick the lowest label.
pub fn downsample_labels_majority(labels: &LabelImage, dst: Grid2) -> Result<LabelImage> {
    let src = labels.grid();
    ensure_overlap(src, &dst)?;
    let [ny, nx] = dst.dims;
    let mut out = vec![0u8; ny * nx];
    let max_label = labels.max_label() as usize;
    let mut counts = vec![0u32; max_label + 1];
    for j in 0..ny {
        let (ylo, yhi) = footprint(dst.origin_um[0], dst.spacing_um[0], j as f64);
        let sy0 = (((ylo - src.origin_um[0]) / src.spacing_um[0]).ceil().max(0.0)) as usize;
        for i in 0..nx {
            let (xlo, xhi) = footprint(dst.origin_um[1], dst.spacing_um[1], i as f64);
            let sx0 = (((xlo - src.origin_um[1]) / src.spacing_um[1]).ceil().max(0.0)) as usize;
            counts.iter_mut().for_each(|c| *c = 0);
            let mut sy = sy0;
            while sy < src.dims[0] {
                let wy = src.origin_um[0] + sy as f64 * src.spacing_um[0];
                if wy >= yhi {
                    break;
                }
                let mut sx = sx0;
                while sx < src.dims[1] {
                    let wx = src.origin_um[1] + sx as f64 * src.spacing_um[1];
                    if wx >= xhi {
                        break;
                    }
                    counts[labels.get(sy, sx) as usize] += 1;
                    sx += 1;
                }
                sy += 1;
            }
            // Lowest label wins ties; an uncovered pixel stays void.
            let mut best = 0u8;
            let mut best_count = 0u32;
            for (label, &c) in counts.iter().enumerate() {
                if c > best_count {
                    best = label as u8;
                    best_count = c;
                }
            }
            out[j * nx + i] = best;
        }
    }
    LabelImage::new(dst, out)
}

/// Zero map pixels where the mask is void and flag them excluded.
pub fn crop_to_sample(maps: &ElementMapSet, mask: &LabelImage) -> Result<ElementMapSet> {
    if mask.grid() != maps.grid() {
        return Err(Error::geometry("crop mask grid does not match map grid".to_string()));
    }
    let n = maps.grid().pixel_count();
    let mut include: Vec<bool> = match maps.mask() {
        Some(m) => m.to_vec(),
        None => vec![true; n],
    };
    for (i, flag) in include.iter_mut().enumerate() {
        if mask.labels()[i] == 0 {
            *flag = false;
        }
    }
    let entries = maps
        .symbols()
        .iter()
        .zip(maps.maps())
        .map(|(sym, img)| {
            let data = img
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| if include[i] { v } else { 0.0 })
                .collect();
            Ok((sym.clone(), ScalarImage::new(*img.grid(), data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    ElementMapSet::new(*maps.grid(), entries, Some(include))
}

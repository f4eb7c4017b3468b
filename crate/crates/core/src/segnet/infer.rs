//! Whole-volume inference: per-slice tiling, probability averaging over the
//! overlap regions, and per-pixel argmax.

use super::data::tile_offsets;
use super::ops::Tensor;
use super::UNet;
use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume};
use rayon::prelude::*;

/// Segments every z-orthoslice of `volume` with a trained net.
///
/// Intensities are normalized to [0, 1] with the volume-wide value range (a
/// per-slice range would shift classes between slices that happen to miss
/// bright or dark phases). Slices are tiled with non-overlapping patches
/// plus border-aligned remainders; where tiles overlap, class probabilities
/// are averaged. Ties in the final argmax resolve to the lower class index.
pub fn segment_volume(net: &UNet, volume: &ScalarVolume) -> Result<LabelVolume> {
    let cfg = net.config();
    if cfg.in_channels != 1 {
        return Err(Error::config("volume inference expects a single-channel network"));
    }
    let [nz, ny, nx] = volume.grid().dims;
    let patch = cfg.patch_size;
    if patch > ny || patch > nx {
        return Err(Error::shape(format!(
            "patch size {patch} does not fit {ny}x{nx} slices"
        )));
    }
    let (lo, hi) = volume.value_range();
    let span = if hi > lo { hi - lo } else { 1.0 };

    let offs_y = tile_offsets(ny, patch, patch);
    let offs_x = tile_offsets(nx, patch, patch);
    let classes = cfg.classes;
    let plane = ny * nx;

    let planes: Vec<Vec<u8>> = (0..nz)
        .into_par_iter()
        .map(|z| -> Result<Vec<u8>> {
            let mut pixels = vec![0.0f64; plane];
            for y in 0..ny {
                for x in 0..nx {
                    pixels[y * nx + x] = (volume.value_at([z, y, x]) - lo) / span;
                }
            }
            let mut prob_sum = vec![0.0f64; classes * plane];
            for &oy in &offs_y {
                for &ox in &offs_x {
                    let mut tile = Vec::with_capacity(patch * patch);
                    for y in 0..patch {
                        for x in 0..patch {
                            tile.push(pixels[(oy + y) * nx + ox + x]);
                        }
                    }
                    let probs = net.forward(&Tensor::from_vec(1, patch, patch, tile))?;
                    for c in 0..classes {
                        for y in 0..patch {
                            for x in 0..patch {
                                prob_sum[c * plane + (oy + y) * nx + ox + x] +=
                                    probs.data[(c * patch + y) * patch + x];
                            }
                        }
                    }
                }
            }
            // Every class shares a pixel's overlap count, so the argmax of
            // the summed probabilities equals the argmax of the averages.
            let mut labels = vec![0u8; plane];
            for i in 0..plane {
                let mut best_c = 0usize;
                let mut best = prob_sum[i];
                for c in 1..classes {
                    let v = prob_sum[c * plane + i];
                    if v > best {
                        best = v;
                        best_c = c;
                    }
                }
                labels[i] = best_c as u8;
            }
            Ok(labels)
        })
        .collect::<Result<_>>()?;

    let mut labels = Vec::with_capacity(nz * plane);
    for p in planes {
        labels.extend(p);
    }
    LabelVolume::new(*volume.grid(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid3;
    use crate::segnet::UNetConfig;
    use crate::volume::VoxelData;

    fn cfg(patch: usize) -> UNetConfig {
        UNetConfig {
            depth: 1,
            base_channels: 2,
            classes: 3,
            patch_size: patch,
            in_channels: 1,
        }
    }

    fn ramp_volume(dims: [usize; 3]) -> ScalarVolume {
        let g = Grid3::isotropic(dims, 1.0).unwrap();
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<f32> = (0..n).map(|i| (i % 97) as f32).collect();
        ScalarVolume::new(g, VoxelData::F32(data)).unwrap()
    }

    #[test]
    fn zero_weights_tie_on_every_pixel_and_resolve_low() {
        let net_cfg = cfg(4);
        let zero = UNet::new(net_cfg.clone(), 0).map(|n| n.param_count()).unwrap();
        let net = UNet::from_params(net_cfg, vec![0.0; zero]).unwrap();
        let out = segment_volume(&net, &ramp_volume([2, 6, 6])).unwrap();
        assert!(out.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn matches_single_patch_forward_when_the_slice_is_one_tile() {
        let net = UNet::new(cfg(8), 21).unwrap();
        let vol = ramp_volume([3, 8, 8]);
        let out = segment_volume(&net, &vol).unwrap();
        let (lo, hi) = vol.value_range();
        for z in 0..3 {
            let tile: Vec<f64> = (0..64)
                .map(|i| (vol.value_at([z, i / 8, i % 8]) - lo) / (hi - lo))
                .collect();
            let probs = net.forward(&Tensor::from_vec(1, 8, 8, tile)).unwrap();
            for i in 0..64 {
                let mut want = 0u8;
                let mut best = probs.data[i];
                for c in 1..3 {
                    if probs.data[c * 64 + i] > best {
                        best = probs.data[c * 64 + i];
                        want = c as u8;
                    }
                }
                assert_eq!(out.labels()[z * 64 + i], want, "z {z} pixel {i}");
            }
        }
    }

    #[test]
    fn overlapping_tiles_of_a_constant_volume_agree() {
        let net = UNet::new(cfg(8), 5).unwrap();
        let g = Grid3::isotropic([1, 12, 12], 1.0).unwrap();
        let vol = ScalarVolume::new(g, VoxelData::F32(vec![3.5; 144])).unwrap();
        let out = segment_volume(&net, &vol).unwrap();
        let first = out.labels()[0];
        assert!(out.labels().iter().all(|&l| l == first));
    }

    #[test]
    fn inference_is_deterministic() {
        let net = UNet::new(cfg(4), 13).unwrap();
        let vol = ramp_volume([2, 10, 10]);
        let a = segment_volume(&net, &vol).unwrap();
        let b = segment_volume(&net, &vol).unwrap();
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn undersized_slices_are_rejected() {
        let net = UNet::new(cfg(8), 0).unwrap();
        let err = segment_volume(&net, &ramp_volume([1, 4, 4])).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "got {err:?}");
    }
}

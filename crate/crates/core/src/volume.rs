//! Volumetric containers and trilinear sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::image::{LabelImage, ScalarImage};

/// Stored element type of a scalar volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "u8")]
    U8,
    #[serde(rename = "u16")]
    U16,
    #[serde(rename = "f32")]
    F32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::U16(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            VoxelData::U8(_) => Dtype::U8,
            VoxelData::U16(_) => Dtype::U16,
            VoxelData::F32(_) => Dtype::F32,
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self {
            VoxelData::U8(v) => v[i] as f64,
            VoxelData::U16(v) => v[i] as f64,
            VoxelData::F32(v) => v[i] as f64,
        }
    }
}

/// 3D scalar field on a voxel grid (the tomogram container).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    grid: Grid3,
    data: VoxelData,
}

impl ScalarVolume {
    pub fn new(grid: Grid3, data: VoxelData) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::shape(format!(
                "volume data length {} does not match grid {:?}",
                data.len(),
                grid.dims
            )));
        }
        if let VoxelData::F32(v) = &data {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::numerical("volume contains non-finite values"));
            }
        }
        Ok(ScalarVolume { grid, data })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    #[inline]
    pub fn value_at(&self, index: [usize; 3]) -> f64 {
        self.data.get(self.grid.offset(index))
    }

    /// Minimum and maximum voxel value.
    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.data.len() {
            let v = self.data.get(i);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Trilinear interpolation at a world point (z, y, x).
    ///
    /// The sampled domain is the closed box spanned by the voxel centres;
    /// points outside it return `fill`.
    pub fn sample_trilinear(&self, p: [f64; 3], fill: f64) -> f64 {
        let ci = self.grid.continuous_index(p);
        let dims = self.grid.dims;
        for a in 0..3 {
            if !(ci[a] >= 0.0 && ci[a] <= (dims[a] - 1) as f64) {
                return fill;
            }
        }
        let i0: [usize; 3] = [ci[0] as usize, ci[1] as usize, ci[2] as usize];
        let i1 = [
            (i0[0] + 1).min(dims[0] - 1),
            (i0[1] + 1).min(dims[1] - 1),
            (i0[2] + 1).min(dims[2] - 1),
        ];
        let f = [ci[0] - i0[0] as f64, ci[1] - i0[1] as f64, ci[2] - i0[2] as f64];
        let mut acc = 0.0;
        for (za, wz) in [(i0[0], 1.0 - f[0]), (i1[0], f[0])] {
            if wz == 0.0 {
                continue;
            }
            for (ya, wy) in [(i0[1], 1.0 - f[1]), (i1[1], f[1])] {
                if wy == 0.0 {
                    continue;
                }
                for (xa, wx) in [(i0[2], 1.0 - f[2]), (i1[2], f[2])] {
                    if wx == 0.0 {
                        continue;
                    }
                    acc += wz * wy * wx * self.value_at([za, ya, xa]);
                }
            }
        }
        acc
    }

    /// True when the world point lies inside the voxel-centre box.
    pub fn contains_point(&self, p: [f64; 3]) -> bool {
        let ci = self.grid.continuous_index(p);
        (0..3).all(|a| ci[a] >= 0.0 && ci[a] <= (self.grid.dims[a] - 1) as f64)
    }

    /// Copy one z-orthoslice out as a 2D image.
    pub fn slice_z(&self, iz: usize) -> Result<ScalarImage> {
        let [nz, ny, nx] = self.grid.dims;
        if iz >= nz {
            return Err(Error::shape(format!("slice {iz} outside {nz} z slices")));
        }
        let grid = Grid2::from_volume_xy(&self.grid);
        let base = iz * ny * nx;
        let data: Vec<f32> = (0..ny * nx).map(|i| self.data.get(base + i) as f32).collect();
        ScalarImage::new(grid, data)
    }
}

use crate::grid::Grid2;

impl Grid2 {
    /// The (y, x) pixel grid shared by every z-orthoslice of a volume grid.
    pub fn from_volume_xy(g: &Grid3) -> Grid2 {
        Grid2 {
            dims: [g.dims[1], g.dims[2]],
            spacing_um: [g.spacing_um[1], g.spacing_um[2]],
            origin_um: [g.origin_um[1], g.origin_um[2]],
        }
    }
}

/// 3D phase labels; 0 is void.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    grid: Grid3,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(grid: Grid3, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != grid.voxel_count() {
            return Err(Error::shape(format!(
                "label data length {} does not match grid {:?}",
                labels.len(),
                grid.dims
            )));
        }
        Ok(LabelVolume { grid, labels })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn label_at(&self, index: [usize; 3]) -> u8 {
        self.labels[self.grid.offset(index)]
    }

    pub fn slice_z(&self, iz: usize) -> Result<LabelImage> {
        let [nz, ny, nx] = self.grid.dims;
        if iz >= nz {
            return Err(Error::shape(format!("slice {iz} outside {nz} z slices")));
        }
        let grid = Grid2::from_volume_xy(&self.grid);
        let base = iz * ny * nx;
        LabelImage::new(grid, self.labels[base..base + ny * nx].to_vec())
    }

    /// Highest label present.
    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume_from(vals: Vec<f32>, dims: [usize; 3]) -> ScalarVolume {
        let grid = Grid3::isotropic(dims, 1.0).unwrap();
        ScalarVolume::new(grid, VoxelData::F32(vals)).unwrap()
    }

    #[test]
    fn rejects_length_mismatch() {
        let grid = Grid3::isotropic([2, 2, 2], 1.0).unwrap();
        assert!(ScalarVolume::new(grid, VoxelData::U8(vec![0; 7])).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let grid = Grid3::isotropic([1, 1, 2], 1.0).unwrap();
        assert!(ScalarVolume::new(grid, VoxelData::F32(vec![0.0, f32::NAN])).is_err());
    }

    #[test]
    fn trilinear_identity_at_voxel_centres() {
        let vals: Vec<f32> = (0..27).map(|i| i as f32).collect();
        let vol = volume_from(vals, [3, 3, 3]);
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    let p = vol.grid().world_of([z, y, x]).unwrap();
                    let got = vol.sample_trilinear(p, -1.0);
                    assert_eq!(got, vol.value_at([z, y, x]));
                }
            }
        }
    }

    #[test]
    fn trilinear_midpoint_is_mean() {
        let vol = volume_from(vec![10.0, 20.0], [1, 1, 2]);
        assert!((vol.sample_trilinear([0.0, 0.0, 0.5], 0.0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn trilinear_outside_returns_fill() {
        let vol = volume_from(vec![5.0; 8], [2, 2, 2]);
        assert_eq!(vol.sample_trilinear([0.0, 0.0, -0.1], 7.0), 7.0);
        assert_eq!(vol.sample_trilinear([0.0, 0.0, 1.1], 7.0), 7.0);
        assert_eq!(vol.sample_trilinear([9.0, 0.0, 0.0], 7.0), 7.0);
    }

    /// Direct 8-corner weighted sum, written independently of the
    /// implementation's loop structure.
    fn trilinear_oracle(vol: &ScalarVolume, p: [f64; 3]) -> f64 {
        let ci = vol.grid().continuous_index(p);
        let d = vol.grid().dims;
        let fz = ci[0].floor();
        let fy = ci[1].floor();
        let fx = ci[2].floor();
        let (tz, ty, tx) = (ci[0] - fz, ci[1] - fy, ci[2] - fx);
        let at = |z: f64, y: f64, x: f64| -> f64 {
            let zi = (z.min((d[0] - 1) as f64)) as usize;
            let yi = (y.min((d[1] - 1) as f64)) as usize;
            let xi = (x.min((d[2] - 1) as f64)) as usize;
            vol.value_at([zi, yi, xi])
        };
        let c000 = at(fz, fy, fx);
        let c001 = at(fz, fy, fx + 1.0);
        let c010 = at(fz, fy + 1.0, fx);
        let c011 = at(fz, fy + 1.0, fx + 1.0);
        let c100 = at(fz + 1.0, fy, fx);
        let c101 = at(fz + 1.0, fy, fx + 1.0);
        let c110 = at(fz + 1.0, fy + 1.0, fx);
        let c111 = at(fz + 1.0, fy + 1.0, fx + 1.0);
        let c00 = c000 * (1.0 - tx) + c001 * tx;
        let c01 = c010 * (1.0 - tx) + c011 * tx;
        let c10 = c100 * (1.0 - tx) + c101 * tx;
        let c11 = c110 * (1.0 - tx) + c111 * tx;
        let c0 = c00 * (1.0 - ty) + c01 * ty;
        let c1 = c10 * (1.0 - ty) + c11 * ty;
        c0 * (1.0 - tz) + c1 * tz
    }

    #[test]
    fn trilinear_matches_direct_formula_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20260814);
        let vals: Vec<f32> = (0..64).map(|_| rng.random_range(0.0f32..255.0)).collect();
        let vol = volume_from(vals, [4, 4, 4]);
        for _ in 0..500 {
            let p = [
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..3.0),
            ];
            let got = vol.sample_trilinear(p, 0.0);
            let want = trilinear_oracle(&vol, p);
            assert!(
                (got - want).abs() <= 1e-6 * (1.0 + want.abs()),
                "{got} vs {want} at {p:?}"
            );
        }
    }

    #[test]
    fn trilinear_is_lipschitz_continuous() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let vals: Vec<f32> = (0..64).map(|_| rng.random_range(0.0f32..255.0)).collect();
        let vol = volume_from(vals.clone(), [4, 4, 4]);
        // Max adjacent voxel difference bounds the slope per unit spacing.
        let mut max_diff = 0.0f64;
        for z in 0..4usize {
            for y in 0..4usize {
                for x in 0..4usize {
                    let v = vol.value_at([z, y, x]);
                    if x + 1 < 4 {
                        max_diff = max_diff.max((v - vol.value_at([z, y, x + 1])).abs());
                    }
                    if y + 1 < 4 {
                        max_diff = max_diff.max((v - vol.value_at([z, y + 1, x])).abs());
                    }
                    if z + 1 < 4 {
                        max_diff = max_diff.max((v - vol.value_at([z + 1, y, x])).abs());
                    }
                }
            }
        }
        let l = 3.0 * max_diff; // three axes may each contribute
        for _ in 0..200 {
            let p = [
                rng.random_range(0.05..2.95),
                rng.random_range(0.05..2.95),
                rng.random_range(0.05..2.95),
            ];
            let d = 0.01;
            let q = [p[0] + d, p[1] - d, p[2] + d];
            let step = (3.0f64).sqrt() * d;
            let df = (vol.sample_trilinear(p, 0.0) - vol.sample_trilinear(q, 0.0)).abs();
            assert!(df <= l * step + 1e-9, "jump {df} over step {step}");
        }
    }

    #[test]
    fn slice_z_copies_one_plane() {
        let vals: Vec<f32> = (0..24).map(|i| i as f32).collect();
        let vol = volume_from(vals, [2, 3, 4]);
        let s = vol.slice_z(1).unwrap();
        assert_eq!(s.grid().dims, [3, 4]);
        assert_eq!(s.get(0, 0), 12.0);
        assert_eq!(s.get(2, 3), 23.0);
    }
}

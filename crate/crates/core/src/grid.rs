//! Sampling grids for volumes and maps.
//!
//! Axis order is (z, y, x) for 3D and (y, x) for 2D, slowest-varying first,
//! and every coordinate triple in the crate (indices, world points,
//! translations) uses that same component order. World units are micrometres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel grid of a 3D volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    /// Voxel counts (nz, ny, nx).
    pub dims: [usize; 3],
    /// Voxel pitch along (z, y, x) in micrometres.
    pub spacing_um: [f64; 3],
    /// World coordinate of voxel (0, 0, 0).
    pub origin_um: [f64; 3],
}

impl Grid3 {
    pub fn new(dims: [usize; 3], spacing_um: [f64; 3], origin_um: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 1) {
            return Err(Error::config(format!("grid dims must be >= 1, got {dims:?}")));
        }
        if spacing_um.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::config(format!(
                "grid spacing must be positive and finite, got {spacing_um:?}"
            )));
        }
        if origin_um.iter().any(|o| !o.is_finite()) {
            return Err(Error::config(format!("grid origin must be finite, got {origin_um:?}")));
        }
        Ok(Grid3 { dims, spacing_um, origin_um })
    }

    pub fn isotropic(dims: [usize; 3], spacing_um: f64) -> Result<Self> {
        Grid3::new(dims, [spacing_um; 3], [0.0; 3])
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn contains(&self, index: [usize; 3]) -> bool {
        index[0] < self.dims[0] && index[1] < self.dims[1] && index[2] < self.dims[2]
    }

    /// Flat offset of a voxel in (z, y, x) raster order.
    #[inline]
    pub fn offset(&self, index: [usize; 3]) -> usize {
        (index[0] * self.dims[1] + index[1]) * self.dims[2] + index[2]
    }

    /// World coordinate (z, y, x) of a voxel centre.
    pub fn world_of(&self, index: [usize; 3]) -> Result<[f64; 3]> {
        if !self.contains(index) {
            return Err(Error::shape(format!(
                "index {index:?} outside grid dims {:?}",
                self.dims
            )));
        }
        Ok(self.world_of_unchecked([index[0] as f64, index[1] as f64, index[2] as f64]))
    }

    /// World coordinate of a continuous (possibly out-of-range) index.
    #[inline]
    pub fn world_of_unchecked(&self, index: [f64; 3]) -> [f64; 3] {
        [
            self.origin_um[0] + index[0] * self.spacing_um[0],
            self.origin_um[1] + index[1] * self.spacing_um[1],
            self.origin_um[2] + index[2] * self.spacing_um[2],
        ]
    }

    /// Continuous index (z, y, x) of a world point; inverse of `world_of`.
    #[inline]
    pub fn continuous_index(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin_um[0]) / self.spacing_um[0],
            (p[1] - self.origin_um[1]) / self.spacing_um[1],
            (p[2] - self.origin_um[2]) / self.spacing_um[2],
        ]
    }
}

/// Pixel grid of a 2D map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    /// Pixel counts (ny, nx).
    pub dims: [usize; 2],
    /// Pixel pitch along (y, x) in micrometres.
    pub spacing_um: [f64; 2],
    /// World coordinate of pixel (0, 0).
    pub origin_um: [f64; 2],
}

impl Grid2 {
    pub fn new(dims: [usize; 2], spacing_um: [f64; 2], origin_um: [f64; 2]) -> Result<Self> {
        if dims.iter().any(|&d| d < 1) {
            return Err(Error::config(format!("grid dims must be >= 1, got {dims:?}")));
        }
        if spacing_um.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::config(format!(
                "grid spacing must be positive and finite, got {spacing_um:?}"
            )));
        }
        if origin_um.iter().any(|o| !o.is_finite()) {
            return Err(Error::config(format!("grid origin must be finite, got {origin_um:?}")));
        }
        Ok(Grid2 { dims, spacing_um, origin_um })
    }

    pub fn isotropic(dims: [usize; 2], spacing_um: f64) -> Result<Self> {
        Grid2::new(dims, [spacing_um; 2], [0.0; 2])
    }

    pub fn pixel_count(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn contains(&self, index: [usize; 2]) -> bool {
        index[0] < self.dims[0] && index[1] < self.dims[1]
    }

    #[inline]
    pub fn offset(&self, index: [usize; 2]) -> usize {
        index[0] * self.dims[1] + index[1]
    }

    /// World coordinate (y, x) of a pixel centre.
    pub fn world_of(&self, index: [usize; 2]) -> Result<[f64; 2]> {
        if !self.contains(index) {
            return Err(Error::shape(format!(
                "index {index:?} outside grid dims {:?}",
                self.dims
            )));
        }
        Ok([
            self.origin_um[0] + index[0] as f64 * self.spacing_um[0],
            self.origin_um[1] + index[1] as f64 * self.spacing_um[1],
        ])
    }

    /// Continuous index (y, x) of a world point.
    #[inline]
    pub fn continuous_index(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.origin_um[0]) / self.spacing_um[0],
            (p[1] - self.origin_um[1]) / self.spacing_um[1],
        ]
    }

    /// World extent (height, width) covered by the pixel footprint.
    pub fn extent_um(&self) -> [f64; 2] {
        [
            self.dims[0] as f64 * self.spacing_um[0],
            self.dims[1] as f64 * self.spacing_um[1],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_of_origin_voxel() {
        let g = Grid3::isotropic([4, 4, 4], 10.79).unwrap();
        assert_eq!(g.world_of([0, 0, 0]).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn world_of_ct_pitch() {
        let g = Grid3::isotropic([4, 4, 4], 10.79).unwrap();
        assert_eq!(g.world_of([0, 0, 2]).unwrap(), [0.0, 0.0, 21.58]);
    }

    #[test]
    fn world_of_xrf_pitch_with_origin() {
        let g = Grid2::new([8, 8], [40.0, 40.0], [100.0, 100.0]).unwrap();
        assert_eq!(g.world_of([1, 1]).unwrap(), [140.0, 140.0]);
    }

    #[test]
    fn world_of_rejects_out_of_range() {
        let g = Grid3::isotropic([2, 2, 2], 1.0).unwrap();
        assert!(g.world_of([0, 0, 2]).is_err());
    }

    #[test]
    fn constructor_rejects_bad_spacing() {
        assert!(Grid3::new([1, 1, 1], [0.0, 1.0, 1.0], [0.0; 3]).is_err());
        assert!(Grid2::new([1, 1], [1.0, -2.0], [0.0; 2]).is_err());
        assert!(Grid3::new([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn continuous_index_inverts_world_of() {
        let g = Grid3::new([5, 6, 7], [2.0, 3.0, 4.0], [10.0, -5.0, 0.5]).unwrap();
        let p = g.world_of([2, 4, 6]).unwrap();
        let idx = g.continuous_index(p);
        assert!((idx[0] - 2.0).abs() < 1e-12);
        assert!((idx[1] - 4.0).abs() < 1e-12);
        assert!((idx[2] - 6.0).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // world_of is affine: stepping an index by j moves the world
            // point by j * spacing on every axis.
            #[test]
            fn world_of_is_affine(
                i in 0usize..30, j in 0usize..30,
                axis in 0usize..3,
                spacing in 0.1f64..100.0,
                origin in -1e4f64..1e4,
            ) {
                let mut dims = [40usize; 3];
                dims[axis] = 64;
                let mut sp = [1.0; 3];
                sp[axis] = spacing;
                let mut or = [0.0; 3];
                or[axis] = origin;
                let g = Grid3::new(dims, sp, or).unwrap();
                let mut a = [0usize; 3];
                a[axis] = i;
                let mut b = [0usize; 3];
                b[axis] = i + j;
                let wa = g.world_of(a).unwrap();
                let wb = g.world_of(b).unwrap();
                let step = wb[axis] - wa[axis];
                prop_assert!((step - j as f64 * spacing).abs() <= 1e-9 * (1.0 + step.abs()));
            }
        }
    }
}

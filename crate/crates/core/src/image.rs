//! 2D map containers: scalar intensity images, label images, and ordered
//! per-element map stacks.

use crate::elements::ELEMENT_ORDER;
use crate::error::{Error, Result};
use crate::grid::Grid2;

/// 2D scalar field on a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    grid: Grid2,
    data: Vec<f32>,
}

impl ScalarImage {
    pub fn new(grid: Grid2, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.pixel_count() {
            return Err(Error::shape(format!(
                "image data length {} does not match grid {:?}",
                data.len(),
                grid.dims
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("image contains non-finite values"));
        }
        Ok(ScalarImage { grid, data })
    }

    pub fn filled(grid: Grid2, value: f32) -> Self {
        ScalarImage { grid, data: vec![value; grid.pixel_count()] }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, iy: usize, ix: usize) -> f32 {
        self.data[iy * self.grid.dims[1] + ix]
    }

    #[inline]
    pub fn set(&mut self, iy: usize, ix: usize, v: f32) {
        self.data[iy * self.grid.dims[1] + ix] = v;
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Bilinear interpolation at a continuous (y, x) pixel index; the valid
    /// domain is the closed box of pixel centres, outside returns `fill`.
    pub fn sample_bilinear_index(&self, cy: f64, cx: f64, fill: f32) -> f32 {
        let [ny, nx] = self.grid.dims;
        if !(cy >= 0.0 && cy <= (ny - 1) as f64 && cx >= 0.0 && cx <= (nx - 1) as f64) {
            return fill;
        }
        let y0 = cy as usize;
        let x0 = cx as usize;
        let y1 = (y0 + 1).min(ny - 1);
        let x1 = (x0 + 1).min(nx - 1);
        let fy = cy - y0 as f64;
        let fx = cx - x0 as f64;
        let v00 = self.get(y0, x0) as f64;
        let v01 = self.get(y0, x1) as f64;
        let v10 = self.get(y1, x0) as f64;
        let v11 = self.get(y1, x1) as f64;
        let top = v00 * (1.0 - fx) + v01 * fx;
        let bot = v10 * (1.0 - fx) + v11 * fx;
        (top * (1.0 - fy) + bot * fy) as f32
    }
}

/// 2D phase labels; 0 is void.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    grid: Grid2,
    labels: Vec<u8>,
}

impl LabelImage {
    pub fn new(grid: Grid2, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != grid.pixel_count() {
            return Err(Error::shape(format!(
                "label data length {} does not match grid {:?}",
                labels.len(),
                grid.dims
            )));
        }
        Ok(LabelImage { grid, labels })
    }

    pub fn filled(grid: Grid2, label: u8) -> Self {
        LabelImage { grid, labels: vec![label; grid.pixel_count()] }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    #[inline]
    pub fn get(&self, iy: usize, ix: usize) -> u8 {
        self.labels[iy * self.grid.dims[1] + ix]
    }

    #[inline]
    pub fn set(&mut self, iy: usize, ix: usize, v: u8) {
        self.labels[iy * self.grid.dims[1] + ix] = v;
    }

    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Fraction of pixels carrying the void label 0.
    pub fn void_fraction(&self) -> f64 {
        let voids = self.labels.iter().filter(|&&l| l == 0).count();
        voids as f64 / self.labels.len() as f64
    }
}

/// Ordered stack of per-element intensity maps sharing one grid, with an
/// optional inclusion mask (`true` = sample pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMapSet {
    grid: Grid2,
    symbols: Vec<String>,
    maps: Vec<ScalarImage>,
    mask: Option<Vec<bool>>,
}

impl ElementMapSet {
    pub fn new(
        grid: Grid2,
        entries: Vec<(String, ScalarImage)>,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        let mut symbols = Vec::with_capacity(entries.len());
        let mut maps = Vec::with_capacity(entries.len());
        for (sym, img) in entries {
            if img.grid() != &grid {
                return Err(Error::geometry(format!(
                    "map {sym} grid {:?} differs from set grid {:?}",
                    img.grid().dims,
                    grid.dims
                )));
            }
            if symbols.contains(&sym) {
                return Err(Error::config(format!("duplicate element symbol {sym}")));
            }
            symbols.push(sym);
            maps.push(img);
        }
        if let Some(m) = &mask {
            if m.len() != grid.pixel_count() {
                return Err(Error::shape("mask length does not match grid".to_string()));
            }
        }
        Ok(ElementMapSet { grid, symbols, maps, mask })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn maps(&self) -> &[ScalarImage] {
        &self.maps
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn map_of(&self, symbol: &str) -> Option<&ScalarImage> {
        self.symbols.iter().position(|s| s == symbol).map(|i| &self.maps[i])
    }

    pub fn set_mask(&mut self, mask: Option<Vec<bool>>) -> Result<()> {
        if let Some(m) = &mask {
            if m.len() != self.grid.pixel_count() {
                return Err(Error::shape("mask length does not match grid".to_string()));
            }
        }
        self.mask = mask;
        Ok(())
    }

    /// Replace one element's map in place; the grid must match.
    pub fn replace_map(&mut self, symbol: &str, img: ScalarImage) -> Result<()> {
        if img.grid() != &self.grid {
            return Err(Error::geometry("replacement map grid differs from set grid".to_string()));
        }
        match self.symbols.iter().position(|s| s == symbol) {
            Some(i) => {
                self.maps[i] = img;
                Ok(())
            }
            None => Err(Error::config(format!("no element {symbol} in map set"))),
        }
    }

    /// True when the symbols follow the canonical acquisition order.
    pub fn has_canonical_order(&self) -> bool {
        self.symbols.len() == ELEMENT_ORDER.len()
            && self.symbols.iter().zip(ELEMENT_ORDER).all(|(a, b)| a == b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_set_rejects_grid_mismatch() {
        let g = Grid2::isotropic([4, 4], 40.0).unwrap();
        let other = Grid2::isotropic([4, 5], 40.0).unwrap();
        let a = ScalarImage::filled(g, 1.0);
        let b = ScalarImage::filled(other, 1.0);
        let err = ElementMapSet::new(g, vec![("Al".into(), a), ("Si".into(), b)], None);
        assert!(err.is_err());
    }

    #[test]
    fn map_set_rejects_duplicate_symbol() {
        let g = Grid2::isotropic([2, 2], 40.0).unwrap();
        let a = ScalarImage::filled(g, 1.0);
        let b = ScalarImage::filled(g, 2.0);
        assert!(ElementMapSet::new(g, vec![("Al".into(), a), ("Al".into(), b)], None).is_err());
    }

    #[test]
    fn map_lookup_by_symbol() {
        let g = Grid2::isotropic([2, 2], 40.0).unwrap();
        let set = ElementMapSet::new(
            g,
            vec![
                ("Al".into(), ScalarImage::filled(g, 1.0)),
                ("Si".into(), ScalarImage::filled(g, 9.0)),
            ],
            None,
        )
        .unwrap();
        assert_eq!(set.map_of("Si").unwrap().get(0, 0), 9.0);
        assert!(set.map_of("Fe").is_none());
    }

    #[test]
    fn canonical_order_is_recognized() {
        let g = Grid2::isotropic([1, 1], 40.0).unwrap();
        let entries: Vec<_> = ELEMENT_ORDER
            .iter()
            .map(|s| (s.to_string(), ScalarImage::filled(g, 0.0)))
            .collect();
        let set = ElementMapSet::new(g, entries, None).unwrap();
        assert!(set.has_canonical_order());
    }

    #[test]
    fn bilinear_index_sampling() {
        let g = Grid2::isotropic([1, 2], 1.0).unwrap();
        let img = ScalarImage::new(g, vec![10.0, 20.0]).unwrap();
        assert_eq!(img.sample_bilinear_index(0.0, 0.5, 0.0), 15.0);
        assert_eq!(img.sample_bilinear_index(0.0, -0.2, -5.0), -5.0);
    }
}

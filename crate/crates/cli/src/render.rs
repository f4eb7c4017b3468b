//! PNG slice snapshots: greyscale tomograms and colour-coded phase maps.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use xfct::elements::phase_color;
use xfct::error::{Error, Result};
use xfct::image::{LabelImage, ScalarImage};
use xfct::PhaseCatalog;

fn save(path: &Path, img: RgbImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| Error::format(path, format!("png encode: {e}")))
}

/// Greyscale render with a fixed intensity window, so every slice of one
/// volume shares a scale.
pub fn save_scalar_png(path: &Path, slice: &ScalarImage, lo: f64, hi: f64) -> Result<()> {
    let [ny, nx] = slice.grid().dims;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::new(nx as u32, ny as u32);
    for iy in 0..ny {
        for ix in 0..nx {
            let v = ((slice.get(iy, ix) as f64 - lo) / span).clamp(0.0, 1.0);
            let g = (v * 255.0).round() as u8;
            img.put_pixel(ix as u32, iy as u32, Rgb([g, g, g]));
        }
    }
    save(path, img)
}

/// Colour-coded phase render; void stays black and labels beyond the
/// catalog are an error.
pub fn save_label_png(path: &Path, labels: &LabelImage, catalog: &PhaseCatalog) -> Result<()> {
    let mut table = vec![[0u8; 3]; 256];
    for phase in &catalog.phases {
        let l = catalog.label_of(&phase.name).expect("catalog phase has a label");
        table[l as usize] = phase_color(&phase.name);
    }
    let [ny, nx] = labels.grid().dims;
    let mut img = RgbImage::new(nx as u32, ny as u32);
    for iy in 0..ny {
        for ix in 0..nx {
            let l = labels.get(iy, ix);
            if l as usize > catalog.phases.len() {
                return Err(Error::data(format!(
                    "label {l} has no phase in the {}-phase catalog",
                    catalog.phases.len()
                )));
            }
            img.put_pixel(ix as u32, iy as u32, Rgb(table[l as usize]));
        }
    }
    save(path, img)
}

//! Element map sets on disk: a directory with one PGM per element plus a
//! `manifest.json` naming the files in acquisition order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::image::{ElementMapSet, ScalarImage};
use crate::io::pgm::{self, BitDepth};
use crate::provenance::Provenance;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    symbol: String,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    grid: Grid2,
    elements: Vec<ManifestEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub fn write_map_set(dir: &Path, set: &ElementMapSet, provenance: Option<&Provenance>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (sym, img) in set.symbols().iter().zip(set.maps()) {
        let file = format!("{sym}.pgm");
        pgm::write_scalar_pgm(&dir.join(&file), img, BitDepth::Eight, provenance)?;
        entries.push(ManifestEntry { symbol: sym.clone(), file });
    }
    let mask_file = match set.mask() {
        Some(mask) => {
            let img = ScalarImage::new(
                *set.grid(),
                mask.iter().map(|&m| if m { 255.0 } else { 0.0 }).collect(),
            )?;
            pgm::write_scalar_pgm(&dir.join("mask.pgm"), &img, BitDepth::Eight, provenance)?;
            Some("mask.pgm".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        grid: *set.grid(),
        elements: entries,
        mask_file,
        provenance: provenance.cloned(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(dir, format!("manifest encode: {e}")))?;
    std::fs::write(dir.join("manifest.json"), text)
        .map_err(|e| Error::io(dir.join("manifest.json"), e))
}

pub fn read_map_set(dir: &Path) -> Result<(ElementMapSet, Option<Provenance>)> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(&manifest_path, format!("manifest decode: {e}")))?;
    let mut entries = Vec::new();
    for e in &manifest.elements {
        let (img, _) = pgm::read_scalar_pgm(&dir.join(&e.file))?;
        if img.grid() != &manifest.grid {
            return Err(Error::format(
                dir.join(&e.file),
                "map grid does not match manifest grid",
            ));
        }
        entries.push((e.symbol.clone(), img));
    }
    let mask = match &manifest.mask_file {
        Some(f) => {
            let (img, _) = pgm::read_scalar_pgm(&dir.join(f))?;
            Some(img.data().iter().map(|&v| v > 127.0).collect())
        }
        None => None,
    };
    Ok((ElementMapSet::new(manifest.grid, entries, mask)?, manifest.provenance))
}

//! Binary PGM (P5) reader/writer with a JSON sidecar carrying the pixel grid
//! and provenance. 16-bit samples are big-endian per the netpbm convention.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::image::{LabelImage, ScalarImage};
use crate::provenance::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    grid: Grid2,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_sidecar(path: &Path, grid: &Grid2, provenance: Option<&Provenance>) -> Result<()> {
    let sc = Sidecar { grid: *grid, provenance: provenance.cloned() };
    let text = serde_json::to_string_pretty(&sc)
        .map_err(|e| Error::format(path, format!("sidecar encode: {e}")))?;
    std::fs::write(sidecar_path(path), text).map_err(|e| Error::io(sidecar_path(path), e))
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let sp = sidecar_path(path);
    if !sp.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let sc = serde_json::from_str(&text)
        .map_err(|e| Error::format(&sp, format!("sidecar decode: {e}")))?;
    Ok(Some(sc))
}

fn write_p5(path: &Path, dims: [usize; 2], depth: BitDepth, samples: &[u32]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    write!(w, "P5\n{} {}\n{}\n", dims[1], dims[0], depth.maxval()).map_err(io_err)?;
    match depth {
        BitDepth::Eight => {
            let bytes: Vec<u8> = samples.iter().map(|&s| s as u8).collect();
            w.write_all(&bytes).map_err(io_err)?;
        }
        BitDepth::Sixteen => {
            for &s in samples {
                w.write_all(&(s as u16).to_be_bytes()).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

/// Write a scalar image, rounding half away from zero and clamping to the
/// sample range of the chosen bit depth.
pub fn write_scalar_pgm(
    path: &Path,
    img: &ScalarImage,
    depth: BitDepth,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let maxval = depth.maxval() as f32;
    let samples: Vec<u32> = img
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, maxval) as u32)
        .collect();
    write_p5(path, img.grid().dims, depth, &samples)?;
    write_sidecar(path, img.grid(), provenance)
}

pub fn write_label_pgm(
    path: &Path,
    img: &LabelImage,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let samples: Vec<u32> = img.labels().iter().map(|&l| l as u32).collect();
    write_p5(path, img.grid().dims, BitDepth::Eight, &samples)?;
    write_sidecar(path, img.grid(), provenance)
}

struct P5 {
    dims: [usize; 2],
    maxval: u32,
    samples: Vec<u32>,
}

fn read_p5(path: &Path) -> Result<P5> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.len() < 2 || &raw[..2] != b"P5" {
        return Err(Error::format(path, "not a binary PGM (P5)"));
    }
    // Header: three whitespace-separated fields after the magic, then one
    // whitespace byte before the samples. Comments (#) are not produced by
    // this crate but are tolerated.
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < raw.len() && raw[pos] == b'#' {
            while pos < raw.len() && raw[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        let text = std::str::from_utf8(&raw[start..pos])
            .map_err(|_| Error::format(path, "non-ASCII PGM header"))?;
        let value: u32 = text
            .parse()
            .map_err(|_| Error::format(path, format!("bad PGM header field {text:?}")))?;
        fields.push(value);
    }
    pos += 1; // single whitespace separator
    let (w, h, maxval) = (fields[0] as usize, fields[1] as usize, fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("unsupported maxval {maxval}")));
    }
    let n = w * h;
    let body = &raw[pos..];
    let samples: Vec<u32> = if maxval < 256 {
        if body.len() != n {
            return Err(Error::format(path, "PGM payload length mismatch"));
        }
        body.iter().map(|&b| b as u32).collect()
    } else {
        if body.len() != 2 * n {
            return Err(Error::format(path, "PGM payload length mismatch"));
        }
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32).collect()
    };
    Ok(P5 { dims: [h, w], maxval, samples })
}

fn grid_for(path: &Path, dims: [usize; 2]) -> Result<(Grid2, Option<Provenance>)> {
    match read_sidecar(path)? {
        Some(sc) => {
            if sc.grid.dims != dims {
                return Err(Error::format(
                    path,
                    format!("sidecar dims {:?} do not match PGM dims {:?}", sc.grid.dims, dims),
                ));
            }
            Ok((sc.grid, sc.provenance))
        }
        None => Ok((Grid2::isotropic(dims, 1.0)?, None)),
    }
}

pub fn read_scalar_pgm(path: &Path) -> Result<(ScalarImage, Option<Provenance>)> {
    let p5 = read_p5(path)?;
    let (grid, prov) = grid_for(path, p5.dims)?;
    let data: Vec<f32> = p5.samples.iter().map(|&s| s as f32).collect();
    Ok((ScalarImage::new(grid, data)?, prov))
}

pub fn read_label_pgm(path: &Path) -> Result<(LabelImage, Option<Provenance>)> {
    let p5 = read_p5(path)?;
    if p5.maxval > 255 {
        return Err(Error::format(path, "label PGM must be 8-bit"));
    }
    let (grid, prov) = grid_for(path, p5.dims)?;
    let labels: Vec<u8> = p5.samples.iter().map(|&s| s as u8).collect();
    Ok((LabelImage::new(grid, labels)?, prov))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_round_trip_eight_bit() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2::new([3, 2], [40.0, 40.0], [20.0, 20.0]).unwrap();
        let img = ScalarImage::new(grid, vec![0.0, 10.4, 10.5, 254.6, 255.0, 300.0]).unwrap();
        let path = dir.path().join("m.pgm");
        write_scalar_pgm(&path, &img, BitDepth::Eight, None).unwrap();
        let (back, _) = read_scalar_pgm(&path).unwrap();
        assert_eq!(back.grid(), &grid);
        // Rounded half away from zero, clamped to [0, 255].
        assert_eq!(back.data(), &[0.0, 10.0, 11.0, 255.0, 255.0, 255.0]);
    }

    #[test]
    fn scalar_round_trip_sixteen_bit() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2::isotropic([2, 2], 1.0).unwrap();
        let img = ScalarImage::new(grid, vec![0.0, 1200.0, 52000.0, 65535.0]).unwrap();
        let path = dir.path().join("m16.pgm");
        write_scalar_pgm(&path, &img, BitDepth::Sixteen, None).unwrap();
        let (back, _) = read_scalar_pgm(&path).unwrap();
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn label_round_trip_with_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2::isotropic([2, 3], 40.0).unwrap();
        let img = LabelImage::new(grid, vec![0, 1, 2, 3, 6, 0]).unwrap();
        let path = dir.path().join("labels.pgm");
        let prov = Provenance::new("abc123", 9, "cluster");
        write_label_pgm(&path, &img, Some(&prov)).unwrap();
        let (back, p) = read_label_pgm(&path).unwrap();
        assert_eq!(back, img);
        assert_eq!(p.unwrap(), prov);
    }

    #[test]
    fn rejects_non_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        std::fs::write(&path, b"hello world").unwrap();
        assert!(read_scalar_pgm(&path).is_err());
    }
}

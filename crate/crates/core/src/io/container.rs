//! Volume container file: `XFCT` magic, 4-byte little-endian JSON header
//! length, UTF-8 JSON header, then raw little-endian voxel data in (z, y, x)
//! raster order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::provenance::Provenance;
use crate::volume::{Dtype, LabelVolume, ScalarVolume, VoxelData};

const MAGIC: &[u8; 4] = b"XFCT";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dims: [usize; 3],
    spacing_um: [f64; 3],
    origin_um: [f64; 3],
    dtype: Dtype,
    order: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

fn write_parts(
    path: &Path,
    header: &Header,
    payload: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header_bytes = serde_json::to_vec(header)
        .map_err(|e| Error::format(path, format!("header encode: {e}")))?;
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&header_bytes).map_err(io_err)?;
    payload(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_volume(path: &Path, vol: &ScalarVolume, provenance: Option<&Provenance>) -> Result<()> {
    let g = vol.grid();
    let header = Header {
        dims: g.dims,
        spacing_um: g.spacing_um,
        origin_um: g.origin_um,
        dtype: vol.data().dtype(),
        order: "zyx".to_string(),
        kind: None,
        provenance: provenance.cloned(),
    };
    write_parts(path, &header, |w| match vol.data() {
        VoxelData::U8(v) => w.write_all(v),
        VoxelData::U16(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        }
        VoxelData::F32(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        }
    })
}

pub fn write_label_volume(
    path: &Path,
    vol: &LabelVolume,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let g = vol.grid();
    let header = Header {
        dims: g.dims,
        spacing_um: g.spacing_um,
        origin_um: g.origin_um,
        dtype: Dtype::U8,
        order: "zyx".to_string(),
        kind: Some("labels".to_string()),
        provenance: provenance.cloned(),
    };
    write_parts(path, &header, |w| w.write_all(vol.labels()))
}

fn read_parts(path: &Path) -> Result<(Header, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad magic, not a volume container"));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).map_err(|e| Error::io(path, e))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::format(path, format!("header decode: {e}")))?;
    if header.order != "zyx" {
        return Err(Error::format(path, format!("unsupported order {:?}", header.order)));
    }
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
    Ok((header, data))
}

pub fn read_volume(path: &Path) -> Result<(ScalarVolume, Option<Provenance>)> {
    let (header, raw) = read_parts(path)?;
    let grid = Grid3::new(header.dims, header.spacing_um, header.origin_um)?;
    let n = grid.voxel_count();
    let expect = |bytes: usize| -> Result<()> {
        if raw.len() != bytes {
            Err(Error::format(
                path,
                format!("payload is {} bytes, expected {}", raw.len(), bytes),
            ))
        } else {
            Ok(())
        }
    };
    let data = match header.dtype {
        Dtype::U8 => {
            expect(n)?;
            VoxelData::U8(raw)
        }
        Dtype::U16 => {
            expect(n * 2)?;
            VoxelData::U16(
                raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect(),
            )
        }
        Dtype::F32 => {
            expect(n * 4)?;
            VoxelData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
    };
    Ok((ScalarVolume::new(grid, data)?, header.provenance))
}

pub fn read_label_volume(path: &Path) -> Result<(LabelVolume, Option<Provenance>)> {
    let (header, raw) = read_parts(path)?;
    if header.dtype != Dtype::U8 {
        return Err(Error::format(path, "label volume must be stored as u8"));
    }
    let grid = Grid3::new(header.dims, header.spacing_um, header.origin_um)?;
    if raw.len() != grid.voxel_count() {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, expected {}", raw.len(), grid.voxel_count()),
        ));
    }
    Ok((LabelVolume::new(grid, raw)?, header.provenance))
}

//! Network checkpoint file: `XFCW` magic, 4-byte little-endian JSON header
//! length, UTF-8 JSON header (architecture, epoch, validation loss), then
//! the raw little-endian f64 parameter vector.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::Provenance;
use crate::segnet::{UNet, UNetConfig};

const MAGIC: &[u8; 4] = b"XFCW";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    network: UNetConfig,
    epoch: usize,
    val_loss: f64,
    param_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Debug, Clone)]
pub struct CheckpointFile {
    pub network: UNetConfig,
    pub epoch: usize,
    pub val_loss: f64,
    pub params: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl CheckpointFile {
    /// Restores the trained network this checkpoint captured.
    pub fn into_model(self) -> Result<UNet> {
        UNet::from_params(self.network, self.params)
    }
}

pub fn write_checkpoint(
    path: &Path,
    network: &UNetConfig,
    epoch: usize,
    val_loss: f64,
    params: &[f64],
    provenance: Option<&Provenance>,
) -> Result<()> {
    let header = Header {
        network: network.clone(),
        epoch,
        val_loss,
        param_count: params.len(),
        provenance: provenance.cloned(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::format(path, format!("header encode: {e}")))?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&header_bytes).map_err(io_err)?;
    for v in params {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::format(path, "not a checkpoint file (bad magic)"));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).map_err(io_err)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    if header_len > 1 << 20 {
        return Err(Error::format(path, "implausible header length"));
    }
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::format(path, format!("header decode: {e}")))?;

    let mut params = Vec::with_capacity(header.param_count);
    let mut buf = [0u8; 8];
    for _ in 0..header.param_count {
        r.read_exact(&mut buf).map_err(io_err)?;
        params.push(f64::from_le_bytes(buf));
    }
    if r.read(&mut buf).map_err(io_err)? != 0 {
        return Err(Error::format(path, "trailing bytes after parameter data"));
    }
    Ok(CheckpointFile {
        network: header.network,
        epoch: header.epoch,
        val_loss: header.val_loss,
        params,
        provenance: header.provenance,
    })
}

//! Binary checkpoint: magic, format version, a length-prefixed JSON header
//! and the little-endian parameter array.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{DimTable, QNet};

const MAGIC: &[u8; 8] = b"PKPLQNET";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint holds {found} parameters, its dimension table needs {expected}")]
    ParamCount { found: usize, expected: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    dims: DimTable,
    step: u64,
    seed: u64,
    param_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub dims: DimTable,
    /// Optimizer steps taken.
    pub step: u64,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn net(&self) -> QNet {
        QNet::new(self.dims)
    }
}

pub fn write_checkpoint(w: &mut impl Write, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let header = serde_json::to_vec(&Header {
        dims: ck.dims,
        step: ck.step,
        seed: ck.seed,
        param_count: ck.params.len(),
    })
    .map_err(|e| CheckpointError::Header(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(ck.params.len() * 8);
    for v in &ck.params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let hlen = u64::from_le_bytes(b8) as usize;
    if hlen > 1 << 20 {
        return Err(CheckpointError::Header(format!("header length {hlen} is implausible")));
    }
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf)?;
    let header: Header = serde_json::from_slice(&hbuf).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let expected = QNet::new(header.dims).param_count();
    if header.param_count != expected {
        return Err(CheckpointError::ParamCount {
            found: header.param_count,
            expected,
        });
    }
    let mut data = vec![0u8; expected * 8];
    r.read_exact(&mut data)?;
    let params: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = params.iter().position(|v| !v.is_finite()) {
        return Err(CheckpointError::NonFinite(i));
    }
    Ok(Checkpoint {
        dims: header.dims,
        step: header.step,
        seed: header.seed,
        params,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ck)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

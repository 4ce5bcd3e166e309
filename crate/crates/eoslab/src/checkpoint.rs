//! Model checkpoint file: fixed magic, a JSON header carrying the config and
//! the named-array manifest, then the raw little-endian f32 parameter data in
//! manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use eoslab_core::net::{ModelConfig, ModelState};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"EOSLAB\0\x01";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("manifest mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed header: {0}")]
    BadHeader(#[from] serde_json::Error),
    #[error("invalid model: {0}")]
    Model(#[from] eoslab_core::net::NetError),
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    manifest: Vec<ManifestEntry>,
}

pub fn save(path: &Path, model: &ModelState<f32>) -> Result<(), CheckpointError> {
    let header = Header {
        version: VERSION,
        config: model.config,
        manifest: model
            .param_entries()
            .map(|e| ManifestEntry { name: e.name.clone(), rows: e.rows, cols: e.cols })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    for &p in &model.params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelState<f32>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let mut header_json = vec![0u8; u32::from_le_bytes(len_bytes) as usize];
    r.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)?;
    if header.version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: header.version, expected: VERSION });
    }

    let expected = header.config.param_count();
    let declared: usize = header.manifest.iter().map(|e| e.rows * e.cols).sum();
    if declared != expected {
        return Err(CheckpointError::ShapeMismatch(format!(
            "manifest declares {declared} values, config needs {expected}"
        )));
    }
    let mut params = Vec::with_capacity(expected);
    let mut buf = [0u8; 4];
    for _ in 0..expected {
        r.read_exact(&mut buf)?;
        params.push(f32::from_le_bytes(buf));
    }
    // trailing garbage means a corrupt or truncated-write file
    if r.read(&mut buf)? != 0 {
        return Err(CheckpointError::ShapeMismatch("trailing data after parameters".into()));
    }
    let model = ModelState::from_params(header.config, params)?;
    // the manifest must agree with the layout the config implies
    for (e, m) in model.param_entries().zip(&header.manifest) {
        if e.name != m.name || e.rows != m.rows || e.cols != m.cols {
            return Err(CheckpointError::ShapeMismatch(format!(
                "entry {} ({}x{}) does not match layout entry {} ({}x{})",
                m.name, m.rows, m.cols, e.name, e.rows, e.cols
            )));
        }
    }
    Ok(model)
}

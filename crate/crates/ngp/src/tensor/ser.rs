//! Raw tensor files: little-endian flat f32 payload in `<stem>.bin` plus a
//! JSON sidecar `<stem>.json` carrying `{shape, dtype}`. Used for checkpoints
//! and map dumps.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    shape: Vec<usize>,
    dtype: String,
}

/// Error type for tensor file IO.
#[derive(Debug)]
pub enum TensorIoError {
    Io(io::Error),
    Json(serde_json::Error),
    Format(String),
}

impl std::fmt::Display for TensorIoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Io(e) => write!(f, "tensor io: {e}"),
            Self::Json(e) => write!(f, "tensor sidecar: {e}"),
            Self::Format(msg) => write!(f, "tensor format: {msg}"),
        }
    }
}

impl std::error::Error for TensorIoError {}

impl From<io::Error> for TensorIoError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<serde_json::Error> for TensorIoError {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e)
    }
}

/// Append an extension without touching dots already in the stem.
fn with_suffix(stem: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    std::path::PathBuf::from(s)
}

/// Write `<stem>.bin` + `<stem>.json`.
pub fn write_tensor_f32(stem: &Path, t: &Tensor<f32>) -> Result<(), TensorIoError> {
    let mut bytes = Vec::with_capacity(t.numel() * 4);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(with_suffix(stem, ".bin"), bytes)?;
    let sidecar = Sidecar {
        shape: t.shape().to_vec(),
        dtype: "f32".to_string(),
    };
    fs::write(
        with_suffix(stem, ".json"),
        serde_json::to_string(&sidecar)?,
    )?;
    Ok(())
}

/// Read a tensor written by [`write_tensor_f32`].
pub fn read_tensor_f32(stem: &Path) -> Result<Tensor<f32>, TensorIoError> {
    let sidecar: Sidecar =
        serde_json::from_str(&fs::read_to_string(with_suffix(stem, ".json"))?)?;
    if sidecar.dtype != "f32" {
        return Err(TensorIoError::Format(format!(
            "unsupported dtype {}",
            sidecar.dtype
        )));
    }
    let bytes = fs::read(with_suffix(stem, ".bin"))?;
    let numel: usize = sidecar.shape.iter().product();
    if bytes.len() != numel * 4 {
        return Err(TensorIoError::Format(format!(
            "payload {} bytes does not match shape {:?}",
            bytes.len(),
            sidecar.shape
        )));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(sidecar.shape, data).map_err(|e| TensorIoError::Format(e.to_string()))
}

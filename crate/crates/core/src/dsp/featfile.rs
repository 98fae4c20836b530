//! Feature and embedding files: little-endian f32 row-major binary plus a
//! JSON sidecar at `<path>.json`. Round trips are bit-exact.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MelSpectrogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub num_frames: usize,
    pub num_bins: usize,
    pub sample_rate: u32,
    pub hop_length: usize,
    pub win_length: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

fn write_f32_matrix(path: &Path, values: &Array2<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::Shape(format!(
            "{}: expected {expected} bytes for {rows}x{cols} f32, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes.chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked above"))
}

/// Write a Mel matrix to `path` with its sidecar at `path.json`.
pub fn write_feature(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    write_f32_matrix(path, &mel.values)?;
    let meta = FeatureMeta {
        num_frames: mel.num_frames(),
        num_bins: mel.num_bins(),
        sample_rate: mel.sample_rate,
        hop_length: mel.hop_length,
        win_length: mel.win_length,
    };
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&sidecar, e))?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
}

pub fn read_feature(path: &Path) -> Result<MelSpectrogram> {
    let sidecar = sidecar_path(path);
    let json = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let meta: FeatureMeta = serde_json::from_str(&json).map_err(|e| Error::json(&sidecar, e))?;
    let values = read_f32_matrix(path, meta.num_frames, meta.num_bins)?;
    Ok(MelSpectrogram {
        values,
        sample_rate: meta.sample_rate,
        hop_length: meta.hop_length,
        win_length: meta.win_length,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingMeta {
    dim: usize,
}

/// Write a single embedding vector as f32 binary plus sidecar.
pub fn write_embedding(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string(&EmbeddingMeta { dim: values.len() })
        .map_err(|e| Error::json(&sidecar, e))?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
}

pub fn read_embedding(path: &Path) -> Result<Vec<f64>> {
    let sidecar = sidecar_path(path);
    let json = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let meta: EmbeddingMeta = serde_json::from_str(&json).map_err(|e| Error::json(&sidecar, e))?;
    let m = read_f32_matrix(path, 1, meta.dim)?;
    Ok(m.row(0).to_vec())
}

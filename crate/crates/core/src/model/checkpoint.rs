//! Model checkpoints: parameter blob plus a JSON manifest describing the
//! architecture, training step, and the exact encoders the run was bound to.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, VcModel};
use crate::error::{Error, Result};
use crate::nn::blob::{self, AdamState};
use crate::nn::Adam;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    pub step: u64,
    pub config_hash: String,
    pub content_encoder_checksum: String,
    pub speaker_encoder_checksum: String,
    /// Wiring choice recorded for reproducibility: the manipulator is a
    /// self-attention encoder+decoder stack with a Mel-linear head.
    pub manipulator_topology: String,
    pub params_checksum: String,
}

pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: VcModel,
    pub opt_state: Option<AdamState>,
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

pub fn save_checkpoint(
    path: &Path,
    model: &VcModel,
    opt: Option<&Adam>,
    step: u64,
    config_hash: &str,
    content_encoder_checksum: &str,
    speaker_encoder_checksum: &str,
) -> Result<()> {
    std::fs::write(path, blob::encode(model.store(), opt)).map_err(|e| Error::io(path, e))?;
    let manifest = CheckpointManifest {
        model: model.cfg.clone(),
        step,
        config_hash: config_hash.to_string(),
        content_encoder_checksum: content_encoder_checksum.to_string(),
        speaker_encoder_checksum: speaker_encoder_checksum.to_string(),
        manipulator_topology: "self_attention_encoder_decoder".to_string(),
        params_checksum: model.checksum(),
    };
    let mp = manifest_path(path);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mp, e))?;
    std::fs::write(&mp, json).map_err(|e| Error::io(&mp, e))
}

/// Load a checkpoint, rebuilding the model from the manifest architecture.
/// When `expected_config_hash` is given, a differing hash is refused.
pub fn load_checkpoint(path: &Path, expected_config_hash: Option<&str>) -> Result<Checkpoint> {
    let mp = manifest_path(path);
    let json = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&json).map_err(|e| Error::json(&mp, e))?;

    if let Some(expected) = expected_config_hash {
        if manifest.config_hash != expected {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint was produced under config {} but the current config hashes to {expected}",
                manifest.config_hash
            )));
        }
    }

    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let snap = blob::decode(&bytes)?;
    let mut model = VcModel::new(&manifest.model, 0);
    blob::apply_params(model.store_mut(), &snap.params)?;
    if model.checksum() != manifest.params_checksum {
        return Err(Error::CheckpointMismatch(
            "parameter bytes do not match the manifest checksum".into(),
        ));
    }
    Ok(Checkpoint { manifest, model, opt_state: snap.opt })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            d_mel: 20,
            d_content: 8,
            d_speaker: 12,
            d_model: 32,
            heads: 2,
            d_ff: 48,
            encoder_blocks: 1,
            decoder_blocks: 1,
            prenet_hidden: 24,
            postnet_layers: 3,
            postnet_kernel: 5,
            postnet_channels: 16,
            max_frames: 128,
            ..Default::default()
        }
    }

    #[test]
    fn save_load_round_trip_preserves_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let model = VcModel::new(&small_cfg(), 42);
        save_checkpoint(&p, &model, None, 7, "cfg-hash", "c-ck", "s-ck").unwrap();
        let loaded = load_checkpoint(&p, Some("cfg-hash")).unwrap();
        assert_eq!(loaded.model.checksum(), model.checksum());
        assert_eq!(loaded.manifest.step, 7);
        assert!(loaded.opt_state.is_none());
    }

    #[test]
    fn config_hash_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let model = VcModel::new(&small_cfg(), 42);
        save_checkpoint(&p, &model, None, 0, "hash-a", "c", "s").unwrap();
        assert!(matches!(
            load_checkpoint(&p, Some("hash-b")),
            Err(Error::CheckpointMismatch(_))
        ));
        assert!(load_checkpoint(&p, None).is_ok());
    }

    #[test]
    fn corrupted_blob_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let model = VcModel::new(&small_cfg(), 1);
        save_checkpoint(&p, &model, None, 0, "h", "c", "s").unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        // Flip a bit inside the parameter payload.
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&p, None),
            Err(Error::CheckpointMismatch(_))
        ));
    }
}

//! Dataset manifests and the in-memory training cache.
//!
//! Both encoders are frozen during conversion training, so content features,
//! speaker embeddings, and target std vectors are computed once per utterance
//! at load time and reused every step.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dsp::{
    load_and_resample, mel_spectrogram, trim_silence, MelConfig, MelSpectrogram, TrimConfig,
};
use crate::encoders::{ContentAdapter, ContentFeature, SpeakerEmbedding, ToySpeakerEncoder};
use crate::error::{Error, Result};
use crate::losses::std_vector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub wav_path: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&json).map_err(|e| Error::json(path, e))
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let json = serde_json::to_string_pretty(entries).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// One utterance ready for training steps.
pub struct TrainItem {
    pub utterance_id: String,
    pub speaker_id: String,
    pub mel: MelSpectrogram,
    pub content: ContentFeature,
    pub spk: SpeakerEmbedding,
    /// `[1, d_mel]` per-bin std of the target Mel.
    pub std_row: Array2<f64>,
}

pub struct Dataset {
    pub items: Vec<TrainItem>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Load every manifest entry: resample, trim, extract features, and cache
/// the frozen-encoder outputs. Relative wav paths resolve against the
/// manifest's directory.
pub fn load_dataset(
    manifest_path: &Path,
    mel_cfg: &MelConfig,
    trim_cfg: &TrimConfig,
    content_encoder: &ContentAdapter,
    speaker_encoder: &ToySpeakerEncoder,
) -> Result<Dataset> {
    let entries = read_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(Error::Validation(format!(
            "dataset manifest {} lists no utterances",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut items = Vec::with_capacity(entries.len());
    for entry in entries {
        let wav_path = if entry.wav_path.is_absolute() {
            entry.wav_path.clone()
        } else {
            base.join(&entry.wav_path)
        };
        let wave = load_and_resample(&wav_path, mel_cfg.sample_rate)?;
        let trimmed = trim_silence(&wave, trim_cfg);
        let mel = mel_spectrogram(&trimmed.waveform, mel_cfg)?;
        if mel.num_frames() < 2 {
            return Err(Error::TooShort(format!(
                "{} has {} frames after trimming; need at least 2",
                entry.utterance_id,
                mel.num_frames()
            )));
        }
        let content = content_encoder.extract(&entry.utterance_id, &mel)?;
        let spk = speaker_encoder.embed(&mel)?;
        let std_row = std_vector(&mel.values).insert_axis(Axis(0));
        items.push(TrainItem {
            utterance_id: entry.utterance_id,
            speaker_id: entry.speaker_id,
            mel,
            content,
            spk,
            std_row,
        });
    }
    Ok(Dataset { items })
}

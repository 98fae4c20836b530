//! File-backed encoder adapters.
//!
//! External providers drop precomputed features or embeddings into a
//! directory, one file per utterance id in the f32-plus-sidecar format of
//! [`crate::dsp`]. Content features may arrive at any frame rate; they are
//! linearly interpolated onto the Mel frame timeline.

use std::path::PathBuf;

use ndarray::Array2;

use super::{ContentFeature, EmbeddingSource, SpeakerEmbedding};
use crate::dsp::{read_embedding, read_feature, MelSpectrogram};
use crate::error::{Error, Result};

/// Linear interpolation of `src` rows onto the frame times of `mel`.
///
/// Row `i` of a feature matrix extracted with hop `h` at rate `r` is centered
/// at `i * h / r` seconds; both timelines use that convention. Edge times are
/// clamped.
pub fn align_to_mel_frames(
    src: &Array2<f64>,
    src_hop: usize,
    src_rate: u32,
    mel: &MelSpectrogram,
) -> Array2<f64> {
    let t_out = mel.num_frames();
    let d = src.ncols();
    let src_dt = src_hop as f64 / src_rate as f64;
    let mel_dt = mel.hop_length as f64 / mel.sample_rate as f64;
    let last = (src.nrows() - 1) as f64;

    Array2::from_shape_fn((t_out, d), |(t, j)| {
        let pos = (t as f64 * mel_dt / src_dt).clamp(0.0, last);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        src[[lo, j]] * (1.0 - frac) + src[[hi, j]] * frac
    })
}

/// Reads `<dir>/<utterance_id>.f32` and aligns it to the requested Mel.
pub struct ExternalContentAdapter {
    pub dir: PathBuf,
    pub dim: usize,
}

impl ExternalContentAdapter {
    pub fn new(dir: PathBuf, dim: usize) -> Self {
        ExternalContentAdapter { dir, dim }
    }

    pub fn extract(&self, utterance_id: &str, mel: &MelSpectrogram) -> Result<ContentFeature> {
        let path = self.dir.join(format!("{utterance_id}.f32"));
        let feat = read_feature(&path).map_err(|e| {
            Error::EncoderUnavailable(format!("external content provider failed: {e}"))
        })?;
        if feat.num_bins() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: feat.num_bins() });
        }
        let values = align_to_mel_frames(&feat.values, feat.hop_length, feat.sample_rate, mel);
        Ok(ContentFeature { values })
    }
}

/// Reads `<dir>/<utterance_id>.emb` embeddings for evaluation scoring.
pub struct ExternalSpeakerAdapter {
    pub dir: PathBuf,
}

impl ExternalSpeakerAdapter {
    pub fn new(dir: PathBuf) -> Self {
        ExternalSpeakerAdapter { dir }
    }

    pub fn embed(&self, utterance_id: &str) -> Result<SpeakerEmbedding> {
        let path = self.dir.join(format!("{utterance_id}.emb"));
        let values = read_embedding(&path).map_err(|e| {
            Error::EncoderUnavailable(format!("external speaker provider failed: {e}"))
        })?;
        Ok(SpeakerEmbedding {
            values: ndarray::Array1::from_vec(values),
            source: EmbeddingSource::ReferenceAudio,
        })
    }
}

//! Content and speaker encoders.
//!
//! Both encoders are pre-trained and then frozen; the conversion model treats
//! them as fixed feature extractors. Gradients still flow *through* the
//! speaker encoder into whatever drives its input, which is how the
//! intermediate representation and the output Mel receive speaker
//! supervision, but the encoder weights themselves never move after
//! pretraining.
//!
//! Two adapter families exist: the bundled toy networks (trainable at desk
//! scale, differentiable) and external file-backed providers that read
//! precomputed features or embeddings. Training requires a network speaker
//! encoder; file-backed speaker adapters only serve evaluation scoring.

mod content;
mod external;
mod speaker;

pub use content::ToyContentEncoder;
pub use external::{align_to_mel_frames, ExternalContentAdapter, ExternalSpeakerAdapter};
pub use speaker::ToySpeakerEncoder;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};

/// Bottleneck linguistic features, time aligned 1:1 with Mel frames.
#[derive(Debug, Clone)]
pub struct ContentFeature {
    pub values: Array2<f64>,
}

impl ContentFeature {
    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    ReferenceAudio,
    IntermediateRepresentation,
    Average,
}

/// Fixed-length timbre vector.
#[derive(Debug, Clone)]
pub struct SpeakerEmbedding {
    pub values: Array1<f64>,
    pub source: EmbeddingSource,
}

impl SpeakerEmbedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_row(&self) -> Array2<f64> {
        self.values.clone().insert_axis(ndarray::Axis(0))
    }
}

/// Arithmetic mean of embeddings, dimension checked.
pub fn average_speaker_embedding(embs: &[SpeakerEmbedding]) -> Result<SpeakerEmbedding> {
    let Some(first) = embs.first() else {
        return Err(Error::EmptyInput("cannot average zero embeddings".into()));
    };
    let dim = first.dim();
    let mut sum = Array1::zeros(dim);
    for e in embs {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: e.dim() });
        }
        sum += &e.values;
    }
    Ok(SpeakerEmbedding {
        values: sum.mapv(|v| v / embs.len() as f64),
        source: EmbeddingSource::Average,
    })
}

/// Architecture of the bundled toy encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderArch {
    pub d_mel: usize,
    pub content_hidden: usize,
    pub d_content: usize,
    pub speaker_hidden: usize,
    pub d_speaker: usize,
    pub kernel: usize,
}

impl Default for EncoderArch {
    fn default() -> Self {
        EncoderArch {
            d_mel: 80,
            content_hidden: 128,
            d_content: 64,
            speaker_hidden: 128,
            d_speaker: 192,
            kernel: 5,
        }
    }
}

/// Content feature provider chosen by configuration.
pub enum ContentAdapter {
    Toy(ToyContentEncoder),
    External(ExternalContentAdapter),
}

impl ContentAdapter {
    /// Features aligned to the Mel frames of `mel`. The toy encoder runs the
    /// network; external providers read `<dir>/<utterance_id>.f32` and
    /// interpolate to the Mel timeline.
    pub fn extract(&self, utterance_id: &str, mel: &MelSpectrogram) -> Result<ContentFeature> {
        match self {
            ContentAdapter::Toy(enc) => enc.extract(mel),
            ContentAdapter::External(ext) => ext.extract(utterance_id, mel),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ContentAdapter::Toy(enc) => enc.arch.d_content,
            ContentAdapter::External(ext) => ext.dim,
        }
    }

    /// Identity of the frozen provider, recorded in checkpoints. File-backed
    /// providers have no parameters to fingerprint.
    pub fn checksum(&self) -> String {
        match self {
            ContentAdapter::Toy(enc) => enc.checksum(),
            ContentAdapter::External(_) => "external".to_string(),
        }
    }
}

/// Speaker embedding provider for evaluation-side scoring.
pub enum SpeakerScorer {
    Toy(ToySpeakerEncoder),
    External(ExternalSpeakerAdapter),
}

impl SpeakerScorer {
    pub fn embed(&self, utterance_id: &str, mel: &MelSpectrogram) -> Result<SpeakerEmbedding> {
        match self {
            SpeakerScorer::Toy(enc) => enc.embed(mel),
            SpeakerScorer::External(ext) => ext.embed(utterance_id),
        }
    }
}

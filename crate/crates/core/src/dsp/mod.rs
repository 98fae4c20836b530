//! Audio ingestion and Mel-spectrogram features.
//!
//! Every path in the system speaks log-Mel matrices produced here: 16 kHz
//! mono audio, Hann window 1024, hop 256, 80 Mel bins over 0-8000 Hz,
//! `ln(max(x, 1e-5))` compression. For a waveform of `N` samples the frame
//! count is exactly `N / hop + 1` (center padded).

mod featfile;
mod mel;
mod resample;
mod stft;
mod trim;
mod wav;

pub use featfile::{read_embedding, read_feature, write_embedding, write_feature, FeatureMeta};
pub use mel::{mel_filterbank, mel_spectrogram, MelConfig, MelSpectrogram};
pub use resample::resample;
pub use stft::{istft, stft_complex, stft_magnitude, hann_window};
pub use trim::{trim_silence, TrimConfig, TrimResult};
pub use wav::{load_and_resample, load_wav, write_wav_16bit};

use crate::error::{Error, Result};

/// Mono waveform with an explicit sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("waveform has no samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::DegenerateInput("waveform contains non-finite samples".into()));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &s| m.max(s.abs()))
    }
}

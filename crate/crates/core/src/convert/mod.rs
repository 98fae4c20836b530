//! Zero-shot conversion: source utterance plus target reference audio in,
//! converted Mel (and optionally a waveform) out.
//!
//! The remover is conditioned on the source speaker's embedding, the adder
//! on the average embedding of the target references. Frame count is
//! preserved end to end.

mod griffin_lim;
mod vocoder;

pub use griffin_lim::vocode_griffin_lim;
pub use vocoder::run_external_vocoder;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{
    load_and_resample, mel_spectrogram, trim_silence, write_feature, write_wav_16bit, MelConfig,
    MelSpectrogram, TrimConfig, Waveform,
};
use crate::encoders::{
    average_speaker_embedding, ContentAdapter, SpeakerEmbedding, ToySpeakerEncoder,
};
use crate::error::{Error, Result};
use crate::model::VcModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VocoderMode {
    #[default]
    GriffinLim,
    External,
    None,
}

#[derive(Debug, Clone)]
pub struct ConversionRequest {
    pub source_wav: PathBuf,
    pub target_reference_wavs: Vec<PathBuf>,
    pub output: PathBuf,
    pub vocoder: VocoderMode,
    /// Command template for [`VocoderMode::External`], with `{mel}` and
    /// `{wav}` placeholders.
    pub vocoder_command: Option<String>,
    pub griffin_lim_iterations: usize,
}

#[derive(Debug)]
pub struct ConversionOutput {
    pub mel: MelSpectrogram,
    pub feature_path: PathBuf,
    pub wav_path: Option<PathBuf>,
}

/// A loaded model with its frozen encoders and DSP configuration.
pub struct ConversionPipeline {
    pub model: VcModel,
    pub content: ContentAdapter,
    pub speaker: ToySpeakerEncoder,
    pub mel_cfg: MelConfig,
    pub trim_cfg: TrimConfig,
}

impl ConversionPipeline {
    /// Load a checkpoint and the encoders the run configuration names,
    /// verifying that the encoders are the very ones the checkpoint was
    /// trained against. `check_hash` additionally pins the config hash.
    pub fn load(
        checkpoint: &Path,
        cfg: &crate::config::RunConfig,
        check_hash: bool,
    ) -> Result<(Self, crate::model::checkpoint::CheckpointManifest)> {
        let expected = check_hash.then(|| cfg.hash());
        let ckpt =
            crate::model::checkpoint::load_checkpoint(checkpoint, expected.as_deref())?;
        let content = cfg.encoders.content.load_content(&cfg.encoders.arch)?;
        let speaker = cfg.encoders.speaker.load_speaker_toy()?;
        if speaker.checksum() != ckpt.manifest.speaker_encoder_checksum {
            return Err(Error::CheckpointMismatch(
                "configured speaker encoder is not the one this checkpoint was trained with"
                    .into(),
            ));
        }
        if content.checksum() != ckpt.manifest.content_encoder_checksum {
            return Err(Error::CheckpointMismatch(
                "configured content encoder is not the one this checkpoint was trained with"
                    .into(),
            ));
        }
        Ok((
            ConversionPipeline {
                model: ckpt.model,
                content,
                speaker,
                mel_cfg: cfg.dsp.mel(),
                trim_cfg: cfg.dsp.trim(),
            },
            ckpt.manifest,
        ))
    }
    /// Source/reference ingestion: resample, trim, and extract Mel features.
    pub fn load_mel(&self, path: &Path) -> Result<MelSpectrogram> {
        let wave = load_and_resample(path, self.mel_cfg.sample_rate)?;
        let trimmed = trim_silence(&wave, &self.trim_cfg);
        mel_spectrogram(&trimmed.waveform, &self.mel_cfg)
    }

    /// Average embedding over one or more target reference files.
    pub fn target_embedding(&self, references: &[PathBuf]) -> Result<SpeakerEmbedding> {
        if references.is_empty() {
            return Err(Error::EmptyInput("need at least one target reference".into()));
        }
        let mut embs = Vec::with_capacity(references.len());
        for path in references {
            let mel = self.load_mel(path)?;
            if mel.num_frames() < 2 {
                return Err(Error::TooShort(format!(
                    "target reference {} is shorter than two frames",
                    path.display()
                )));
            }
            embs.push(self.speaker.embed(&mel)?);
        }
        average_speaker_embedding(&embs)
    }

    /// Convert a source Mel toward a target embedding. The source speaker's
    /// own embedding conditions the remover.
    pub fn convert_mel(
        &self,
        source_id: &str,
        mel_src: &MelSpectrogram,
        target: &SpeakerEmbedding,
    ) -> Result<MelSpectrogram> {
        if mel_src.num_frames() < 2 {
            return Err(Error::TooShort("source has fewer than two frames".into()));
        }
        let content = self.content.extract(source_id, mel_src)?;
        let spk_src = self.speaker.embed(mel_src)?;
        let mid = self.model.remove_speaker_info(&content, &spk_src)?;
        let added = self.model.add_speaker_info(&mid, target)?;
        let refined = self.model.postnet_refine(&added)?;
        Ok(MelSpectrogram {
            values: refined,
            sample_rate: mel_src.sample_rate,
            hop_length: mel_src.hop_length,
            win_length: mel_src.win_length,
        })
    }

    /// Full request: load, convert, write the feature file, and vocode as
    /// requested.
    pub fn convert(&self, req: &ConversionRequest) -> Result<ConversionOutput> {
        let mel_src = self.load_mel(&req.source_wav)?;
        let target = self.target_embedding(&req.target_reference_wavs)?;
        let source_id = req
            .source_wav
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "source".to_string());
        let mel_out = self.convert_mel(&source_id, &mel_src, &target)?;

        let feature_path = req.output.with_extension("f32");
        write_feature(&feature_path, &mel_out)?;

        let wav_path = match req.vocoder {
            VocoderMode::None => None,
            VocoderMode::GriffinLim => {
                let wave = vocode_griffin_lim(&mel_out, &self.mel_cfg, req.griffin_lim_iterations)?;
                let path = req.output.with_extension("wav");
                write_wav_16bit(&path, &wave)?;
                Some(path)
            }
            VocoderMode::External => {
                let template = req.vocoder_command.as_deref().ok_or_else(|| {
                    Error::Validation("external vocoder requires a command template".into())
                })?;
                let path = req.output.with_extension("wav");
                run_external_vocoder(template, &feature_path, &path)?;
                Some(path)
            }
        };

        Ok(ConversionOutput { mel: mel_out, feature_path, wav_path })
    }
}

/// Convenience wrapper used by demos and tests that already hold waveforms.
pub fn mel_of_waveform(w: &Waveform, mel_cfg: &MelConfig, trim_cfg: &TrimConfig) -> Result<MelSpectrogram> {
    let trimmed = trim_silence(w, trim_cfg);
    mel_spectrogram(&trimmed.waveform, mel_cfg)
}

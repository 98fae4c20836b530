//! Run configuration: one TOML file describes a whole run.
//!
//! Unknown keys are rejected, defaults are materialized on load, and the
//! canonical hash covers the materialized values, so reordering keys or
//! editing comments never changes the hash while any value change does. The
//! hash lands in checkpoints and is what makes resume safe.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convert::VocoderMode;
use crate::dsp::{MelConfig, TrimConfig};
use crate::encoders::EncoderArch;
use crate::error::{Error, Result};
use crate::evaluation::HistogramConfig;
use crate::model::ModelConfig;
use crate::training::TrainingConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub num_bins: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
    pub trim_threshold_db: f64,
    pub trim_frame_length: usize,
    pub trim_hop_length: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        let mel = MelConfig::default();
        let trim = TrimConfig::default();
        DspConfig {
            sample_rate: mel.sample_rate,
            num_bins: mel.num_bins,
            hop_length: mel.hop_length,
            win_length: mel.win_length,
            fmin: mel.fmin,
            fmax: mel.fmax,
            log_floor: mel.log_floor,
            trim_threshold_db: trim.threshold_db,
            trim_frame_length: trim.frame_length,
            trim_hop_length: trim.hop_length,
        }
    }
}

impl DspConfig {
    pub fn mel(&self) -> MelConfig {
        MelConfig {
            sample_rate: self.sample_rate,
            num_bins: self.num_bins,
            hop_length: self.hop_length,
            win_length: self.win_length,
            fmin: self.fmin,
            fmax: self.fmax,
            log_floor: self.log_floor,
        }
    }

    pub fn trim(&self) -> TrimConfig {
        TrimConfig {
            threshold_db: self.trim_threshold_db,
            frame_length: self.trim_frame_length,
            hop_length: self.trim_hop_length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    #[default]
    Toy,
    External,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    /// Toy adapters: encoder checkpoint file. External adapters: directory
    /// of per-utterance feature/embedding files.
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub content_steps: u64,
    pub speaker_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { content_steps: 400, speaker_steps: 800, batch_size: 4, seed: 9000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EncodersConfig {
    pub arch: EncoderArch,
    pub content: AdapterConfig,
    pub speaker: AdapterConfig,
    pub pretrain: PretrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub vocoder: VocoderMode,
    pub griffin_lim_iterations: usize,
    pub vocoder_command: Option<String>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            vocoder: VocoderMode::GriffinLim,
            griffin_lim_iterations: 60,
            vocoder_command: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub histogram: HistogramConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dsp: DspConfig,
    pub encoders: EncodersConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub inference: InferenceConfig,
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.dsp.num_bins != self.model.d_mel {
            return Err(Error::Validation(format!(
                "dsp.num_bins {} must match model.d_mel {}",
                self.dsp.num_bins, self.model.d_mel
            )));
        }
        if self.encoders.arch.d_mel != self.model.d_mel {
            return Err(Error::Validation("encoders.arch.d_mel must match model.d_mel".into()));
        }
        if self.encoders.arch.d_content != self.model.d_content {
            return Err(Error::Validation(
                "encoders.arch.d_content must match model.d_content".into(),
            ));
        }
        if self.encoders.arch.d_speaker != self.model.d_speaker {
            return Err(Error::Validation(
                "encoders.arch.d_speaker must match model.d_speaker".into(),
            ));
        }
        if self.model.d_model % self.model.heads != 0 {
            return Err(Error::Validation("model.d_model must divide into model.heads".into()));
        }
        Ok(())
    }

    /// Apply a `section.key=value` override.
    pub fn apply_override(&self, assignment: &str) -> Result<RunConfig> {
        let (path, raw_value) = assignment.split_once('=').ok_or_else(|| {
            Error::Validation(format!("override '{assignment}' is not of the form key=value"))
        })?;
        let mut tree = serde_json::to_value(self).expect("config serializes");

        let segments: Vec<&str> = path.trim().split('.').collect();
        let (last, parents) = segments.split_last().expect("split_once gave a nonempty path");
        let mut cursor = &mut tree;
        for seg in parents {
            cursor = cursor
                .as_object_mut()
                .and_then(|map| map.get_mut(*seg))
                .ok_or_else(|| {
                    Error::Validation(format!("unknown configuration key '{seg}' in '{path}'"))
                })?;
        }
        let entry = cursor
            .as_object_mut()
            .and_then(|map| map.get_mut(*last))
            .ok_or_else(|| {
                Error::Validation(format!("unknown configuration key '{last}' in '{path}'"))
            })?;
        *entry = parse_override_value(raw_value.trim());

        let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| {
            Error::Validation(format!("override '{assignment}' has the wrong type: {e}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical (sorted-key) JSON of the materialized config.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut canon = String::new();
        canonical_json(&value, &mut canon);
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The materialized config as TOML, for `--echo-config` style output.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

impl AdapterConfig {
    fn required_path(&self, what: &str) -> Result<&Path> {
        self.checkpoint_path.as_deref().ok_or_else(|| {
            Error::Validation(format!("encoders.{what}.checkpoint_path is not set"))
        })
    }

    pub fn load_content(&self, arch: &EncoderArch) -> Result<crate::encoders::ContentAdapter> {
        use crate::encoders::{ContentAdapter, ExternalContentAdapter, ToyContentEncoder};
        match self.kind {
            AdapterKind::Toy => {
                let enc = ToyContentEncoder::load(self.required_path("content")?)?;
                Ok(ContentAdapter::Toy(enc))
            }
            AdapterKind::External => Ok(ContentAdapter::External(ExternalContentAdapter::new(
                self.required_path("content")?.to_path_buf(),
                arch.d_content,
            ))),
        }
    }

    /// The differentiable speaker encoder required for training and
    /// conversion.
    pub fn load_speaker_toy(&self) -> Result<crate::encoders::ToySpeakerEncoder> {
        match self.kind {
            AdapterKind::Toy => {
                crate::encoders::ToySpeakerEncoder::load(self.required_path("speaker")?)
            }
            AdapterKind::External => Err(Error::Validation(
                "training and conversion need a network speaker encoder; \
                 external file-backed speaker adapters only support evaluation scoring"
                    .into(),
            )),
        }
    }

    /// A speaker adapter for evaluation-side scoring; may be file backed.
    pub fn load_speaker_scorer(&self) -> Result<crate::encoders::SpeakerScorer> {
        use crate::encoders::{ExternalSpeakerAdapter, SpeakerScorer};
        match self.kind {
            AdapterKind::Toy => Ok(SpeakerScorer::Toy(self.load_speaker_toy()?)),
            AdapterKind::External => Ok(SpeakerScorer::External(ExternalSpeakerAdapter::new(
                self.required_path("speaker")?.to_path_buf(),
            ))),
        }
    }
}

fn parse_override_value(raw: &str) -> serde_json::Value {
    if let Ok(v) = raw.parse::<i64>() {
        return serde_json::Value::from(v);
    }
    if let Ok(v) = raw.parse::<f64>() {
        return serde_json::Value::from(v);
    }
    if let Ok(v) = raw.parse::<bool>() {
        return serde_json::Value::from(v);
    }
    serde_json::Value::from(raw)
}

fn canonical_json(value: &serde_json::Value, out: &mut String) {
    match value {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                canonical_json(&map[*k], out);
            }
            out.push('}');
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_json(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&serde_json::to_string(other).unwrap()),
    }
}

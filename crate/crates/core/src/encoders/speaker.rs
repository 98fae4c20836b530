//! Toy speaker encoder: convolutional stack, mean/std statistics pooling,
//! and a linear projection to the embedding space. Pretrained with a speaker
//! classification head that is discarded afterwards.

use std::path::Path;

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::content::{accumulate, manifest_path};
use super::{EmbeddingSource, EncoderArch, SpeakerEmbedding};
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{blob, Adam, AdamConfig, Conv1d, Forward, Linear, ParamStore};
use crate::tensor::{Tape, Var};

pub struct ToySpeakerEncoder {
    pub arch: EncoderArch,
    store: ParamStore,
    conv1: Conv1d,
    conv2: Conv1d,
    proj: Linear,
    pub pretrain_steps: u64,
}

#[derive(Serialize, Deserialize)]
struct SpeakerManifest {
    kind: String,
    arch: EncoderArch,
    checksum: String,
    pretrain_steps: u64,
}

impl ToySpeakerEncoder {
    pub fn new(arch: &EncoderArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let conv1 =
            Conv1d::new(&mut store, &mut rng, "speaker.conv1", arch.d_mel, arch.speaker_hidden, arch.kernel);
        let conv2 = Conv1d::new(
            &mut store,
            &mut rng,
            "speaker.conv2",
            arch.speaker_hidden,
            arch.speaker_hidden,
            arch.kernel,
        );
        let proj = Linear::new(
            &mut store,
            &mut rng,
            "speaker.proj",
            2 * arch.speaker_hidden,
            arch.d_speaker,
        );
        ToySpeakerEncoder { arch: arch.clone(), store, conv1, conv2, proj, pretrain_steps: 0 }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn checksum(&self) -> String {
        self.store.checksum()
    }

    pub fn dim(&self) -> usize {
        self.arch.d_speaker
    }

    /// Record the encoder on a tape: `[T, d_mel] -> [1, d_speaker]`.
    /// Statistics pooling needs at least two frames.
    pub fn graph_forward(&self, tape: &mut Tape, f: &mut Forward, mel: Var) -> Result<Var> {
        let (t, d) = tape.shape(mel);
        if t < 2 {
            return Err(Error::TooShort(format!(
                "speaker embedding needs at least 2 frames, got {t}"
            )));
        }
        if d != self.arch.d_mel {
            return Err(Error::DimensionMismatch { expected: self.arch.d_mel, got: d });
        }
        let h = self.conv1.forward(tape, f, mel);
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, f, h);
        let h = tape.relu(h);
        let mu = tape.mean_rows(h);
        let centered = tape.sub_row_broadcast(h, mu);
        let sq = tape.mul(centered, centered);
        let var = tape.mean_rows(sq);
        let std = tape.sqrt_floor(var, 1e-8);
        let pooled = tape.concat_cols(mu, std);
        Ok(self.proj.forward(tape, f, pooled))
    }

    /// Evaluation-mode embedding of a Mel matrix.
    pub fn embed(&self, mel: &MelSpectrogram) -> Result<SpeakerEmbedding> {
        mel.validate()?;
        self.embed_matrix(&mel.values, EmbeddingSource::ReferenceAudio)
    }

    /// Embedding of an arbitrary Mel-space matrix (used for intermediate
    /// representations and predicted Mels).
    pub fn embed_matrix(
        &self,
        values: &Array2<f64>,
        source: EmbeddingSource,
    ) -> Result<SpeakerEmbedding> {
        let mut tape = Tape::new();
        let mut f = Forward::new(&self.store, false, None);
        let x = tape.constant(values.clone());
        let out = self.graph_forward(&mut tape, &mut f, x)?;
        Ok(SpeakerEmbedding { values: tape.value(out).row(0).to_owned(), source })
    }

    /// Classification pretraining on `(mel, speaker index)` pairs. Returns
    /// the per-step mean cross-entropy curve.
    pub fn pretrain(
        &mut self,
        data: &[(MelSpectrogram, usize)],
        num_speakers: usize,
        steps: u64,
        batch: usize,
        seed: u64,
    ) -> Vec<f64> {
        assert!(!data.is_empty(), "pretraining needs data");
        assert!(data.iter().all(|(_, s)| *s < num_speakers));
        let mut head_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7be4_2d11);
        let mut head_store = ParamStore::new();
        let head = Linear::new(
            &mut head_store,
            &mut head_rng,
            "speaker.class_head",
            self.arch.d_speaker,
            num_speakers,
        );

        let adam_cfg = AdamConfig::default();
        let mut enc_opt = Adam::new(&self.store, adam_cfg);
        let mut head_opt = Adam::new(&head_store, adam_cfg);
        let mut curve = Vec::with_capacity(steps as usize);

        for step in 0..steps {
            let mut pick = ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(0x2545_f491));
            let mut enc_grads: Vec<Option<Array2<f64>>> = vec![None; self.store.len()];
            let mut head_grads: Vec<Option<Array2<f64>>> = vec![None; head_store.len()];
            let mut loss_sum = 0.0;

            for _ in 0..batch {
                let idx = (rand::Rng::random_range(&mut pick, 0..data.len() as u64)) as usize;
                let (mel, spk) = &data[idx];
                let mut tape = Tape::new();
                let mut f_enc = Forward::new(&self.store, true, None);
                let mut f_head = Forward::new(&head_store, true, None);
                let x = tape.constant(mel.values.clone());
                let emb = self
                    .graph_forward(&mut tape, &mut f_enc, x)
                    .expect("pretraining items have enough frames");
                let logits = head.forward(&mut tape, &mut f_head, emb);
                let loss = tape.cross_entropy_rows(logits, vec![*spk]);
                loss_sum += tape.scalar(loss);
                let mut grads = tape.backward(loss);
                accumulate(&mut enc_grads, f_enc.take_grads(&mut grads), batch);
                accumulate(&mut head_grads, f_head.take_grads(&mut grads), batch);
            }

            enc_opt.step(&mut self.store, &enc_grads);
            head_opt.step(&mut head_store, &head_grads);
            curve.push(loss_sum / batch as f64);
        }
        self.pretrain_steps += steps;
        curve
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, blob::encode(&self.store, None)).map_err(|e| Error::io(path, e))?;
        let manifest = SpeakerManifest {
            kind: "speaker".into(),
            arch: self.arch.clone(),
            checksum: self.checksum(),
            pretrain_steps: self.pretrain_steps,
        };
        let mp = manifest_path(path);
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mp, e))?;
        std::fs::write(&mp, json).map_err(|e| Error::io(&mp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mp = manifest_path(path);
        let json = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let manifest: SpeakerManifest =
            serde_json::from_str(&json).map_err(|e| Error::json(&mp, e))?;
        if manifest.kind != "speaker" {
            return Err(Error::CheckpointMismatch(format!(
                "expected a speaker encoder checkpoint, found {}",
                manifest.kind
            )));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let snap = blob::decode(&bytes)?;
        let mut enc = ToySpeakerEncoder::new(&manifest.arch, 0);
        blob::apply_params(&mut enc.store, &snap.params)?;
        enc.pretrain_steps = manifest.pretrain_steps;
        if enc.checksum() != manifest.checksum {
            return Err(Error::CheckpointMismatch("speaker encoder checksum mismatch".into()));
        }
        Ok(enc)
    }
}

//! Toy content encoder: a small convolutional stack from Mel frames to
//! bottleneck features, pretrained as a Mel autoencoder so the bottleneck
//! carries what is being said (plus, deliberately, some residual speaker
//! coloring for the conversion model to strip).

use std::path::Path;

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ContentFeature, EncoderArch};
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::losses::{self, L1Reduction};
use crate::nn::{blob, Adam, AdamConfig, Conv1d, Forward, Linear, ParamStore};
use crate::tensor::{Tape, Var};

pub struct ToyContentEncoder {
    pub arch: EncoderArch,
    store: ParamStore,
    conv1: Conv1d,
    conv2: Conv1d,
    pub pretrain_steps: u64,
}

#[derive(Serialize, Deserialize)]
struct ContentManifest {
    kind: String,
    arch: EncoderArch,
    checksum: String,
    pretrain_steps: u64,
}

impl ToyContentEncoder {
    pub fn new(arch: &EncoderArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let conv1 =
            Conv1d::new(&mut store, &mut rng, "content.conv1", arch.d_mel, arch.content_hidden, arch.kernel);
        let conv2 = Conv1d::new(
            &mut store,
            &mut rng,
            "content.conv2",
            arch.content_hidden,
            arch.d_content,
            arch.kernel,
        );
        ToyContentEncoder { arch: arch.clone(), store, conv1, conv2, pretrain_steps: 0 }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn checksum(&self) -> String {
        self.store.checksum()
    }

    /// Record the encoder on a tape. `f` must be a `Forward` over this
    /// encoder's store; pass `trainable = false` everywhere outside
    /// pretraining.
    pub fn graph_forward(&self, tape: &mut Tape, f: &mut Forward, mel: Var) -> Var {
        let h = self.conv1.forward(tape, f, mel);
        let h = tape.relu(h);
        self.conv2.forward(tape, f, h)
    }

    /// Evaluation-mode extraction.
    pub fn extract(&self, mel: &MelSpectrogram) -> Result<ContentFeature> {
        mel.validate()?;
        if mel.num_bins() != self.arch.d_mel {
            return Err(Error::DimensionMismatch {
                expected: self.arch.d_mel,
                got: mel.num_bins(),
            });
        }
        let mut tape = Tape::new();
        let mut f = Forward::new(&self.store, false, None);
        let x = tape.constant(mel.values.clone());
        let out = self.graph_forward(&mut tape, &mut f, x);
        Ok(ContentFeature { values: tape.value(out).clone() })
    }

    /// Autoencoder pretraining: encoder plus a transient linear decoder head,
    /// L1 reconstruction of the input Mel. Returns the per-step loss curve.
    pub fn pretrain(&mut self, data: &[MelSpectrogram], steps: u64, batch: usize, seed: u64) -> Vec<f64> {
        assert!(!data.is_empty(), "pretraining needs data");
        let mut head_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51a3_9c0b);
        let mut head_store = ParamStore::new();
        let head = Linear::new(
            &mut head_store,
            &mut head_rng,
            "content.recon_head",
            self.arch.d_content,
            self.arch.d_mel,
        );

        let adam_cfg = AdamConfig::default();
        let mut enc_opt = Adam::new(&self.store, adam_cfg);
        let mut head_opt = Adam::new(&head_store, adam_cfg);
        let mut curve = Vec::with_capacity(steps as usize);

        for step in 0..steps {
            let mut pick = ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(0x9e37_79b9));
            let mut enc_grads: Vec<Option<Array2<f64>>> = vec![None; self.store.len()];
            let mut head_grads: Vec<Option<Array2<f64>>> = vec![None; head_store.len()];
            let mut loss_sum = 0.0;

            for _ in 0..batch {
                let idx = (rand::Rng::random_range(&mut pick, 0..data.len() as u64)) as usize;
                let mel = &data[idx];
                let mut tape = Tape::new();
                let mut f_enc = Forward::new(&self.store, true, None);
                let mut f_head = Forward::new(&head_store, true, None);
                let x = tape.constant(mel.values.clone());
                let code = self.graph_forward(&mut tape, &mut f_enc, x);
                let recon = head.forward(&mut tape, &mut f_head, code);
                let loss = losses::graph::reconstruction(&mut tape, x, recon, L1Reduction::Mean);
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
        let manifest = ContentManifest {
            kind: "content".into(),
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
        let manifest: ContentManifest =
            serde_json::from_str(&json).map_err(|e| Error::json(&mp, e))?;
        if manifest.kind != "content" {
            return Err(Error::CheckpointMismatch(format!(
                "expected a content encoder checkpoint, found {}",
                manifest.kind
            )));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let snap = blob::decode(&bytes)?;
        let mut enc = ToyContentEncoder::new(&manifest.arch, 0);
        blob::apply_params(&mut enc.store, &snap.params)?;
        enc.pretrain_steps = manifest.pretrain_steps;
        if enc.checksum() != manifest.checksum {
            return Err(Error::CheckpointMismatch("content encoder checksum mismatch".into()));
        }
        Ok(enc)
    }
}

pub(super) fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}

pub(super) fn accumulate(
    acc: &mut [Option<Array2<f64>>],
    grads: Vec<Option<Array2<f64>>>,
    batch: usize,
) {
    let w = 1.0 / batch as f64;
    for (slot, g) in acc.iter_mut().zip(grads) {
        if let Some(g) = g {
            match slot {
                Some(a) => *a += &g.mapv(|v| v * w),
                None => *slot = Some(g.mapv(|v| v * w)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mel_spectrogram, MelConfig, Waveform};

    fn toy_mel(freq: f64, n: usize) -> MelSpectrogram {
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin() * 0.8)
            .collect();
        mel_spectrogram(&Waveform::new(samples, 16000).unwrap(), &MelConfig::default()).unwrap()
    }

    #[test]
    fn content_rows_match_mel_frames() {
        let enc = ToyContentEncoder::new(&EncoderArch::default(), 3);
        for n in [16000usize, 256, 5000] {
            let mel = toy_mel(300.0, n);
            let c = enc.extract(&mel).unwrap();
            assert_eq!(c.num_frames(), mel.num_frames());
            assert_eq!(c.dim(), 64);
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let enc = ToyContentEncoder::new(&EncoderArch::default(), 3);
        let mel = toy_mel(440.0, 8000);
        let a = enc.extract(&mel).unwrap();
        let b = enc.extract(&mel).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn pretraining_reduces_reconstruction_loss() {
        let arch = EncoderArch::default();
        let mut enc = ToyContentEncoder::new(&arch, 5);
        let data: Vec<MelSpectrogram> =
            [220.0, 330.0, 440.0].iter().map(|&f| toy_mel(f, 6000)).collect();
        let curve = enc.pretrain(&data, 60, 2, 7);
        let head = curve[..5].iter().sum::<f64>() / 5.0;
        let tail = curve[curve.len() - 5..].iter().sum::<f64>() / 5.0;
        assert!(tail < head, "loss did not improve: {head} -> {tail}");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("content.enc");
        let arch = EncoderArch::default();
        let mut enc = ToyContentEncoder::new(&arch, 9);
        enc.pretrain(&[toy_mel(300.0, 4000)], 5, 1, 1);
        enc.save(&p).unwrap();
        let loaded = ToyContentEncoder::load(&p).unwrap();
        assert_eq!(loaded.checksum(), enc.checksum());
        assert_eq!(loaded.pretrain_steps, enc.pretrain_steps);
    }
}

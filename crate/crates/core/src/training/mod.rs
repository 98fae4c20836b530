//! The conversion-training loop.
//!
//! Each step samples a batch with replacement, runs the full forward on each
//! item, composes the six losses, and applies one ADAM update to the model
//! parameters only; the encoders never move. All randomness is derived from
//! `(seed, step)`, so resuming from a checkpoint replays exactly the steps a
//! straight run would have taken.

pub mod dataset;
pub mod metrics;

pub use dataset::{load_dataset, read_manifest, write_manifest, Dataset, ManifestEntry, TrainItem};
pub use metrics::{read_metrics, MetricsRecord, MetricsWriter};

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{ContentAdapter, ToySpeakerEncoder};
use crate::error::{Error, Result};
use crate::losses::{self, L1Reduction, LossBundle};
use crate::model::checkpoint::{load_checkpoint, save_checkpoint};
use crate::model::{ModelConfig, VcModel};
use crate::nn::{Adam, AdamConfig, Forward};
use crate::seeds::{self, tag};
use crate::tensor::Tape;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub lambda_spk: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub checkpoint_interval: u64,
    /// Global-norm gradient clip; values `<= 0` disable clipping.
    pub grad_clip_norm: f64,
    pub l1_reduction: L1Reduction,
    /// Dataset manifest path; may also be supplied on the command line.
    pub dataset_manifest: Option<PathBuf>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-8,
            batch_size: 16,
            lambda_spk: 3.0,
            max_steps: 500,
            seed: 1234,
            checkpoint_interval: 250,
            grad_clip_norm: 1.0,
            l1_reduction: L1Reduction::Mean,
            dataset_manifest: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Validation("beta1/beta2 must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::Validation("checkpoint_interval must be at least 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: (self.grad_clip_norm > 0.0).then_some(self.grad_clip_norm),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepMetrics {
    pub step: u64,
    pub losses: LossBundle,
    /// Mean absolute value of the intermediate representation's speaker
    /// embedding, the monitor for whether the removal supervision bites.
    pub e_mid_l1: f64,
    pub wall_time_ms: f64,
}

fn accumulate(acc: &mut [Option<Array2<f64>>], grads: Vec<Option<Array2<f64>>>, weight: f64) {
    for (slot, g) in acc.iter_mut().zip(grads) {
        if let Some(g) = g {
            match slot {
                Some(a) => *a += &g.mapv(|v| v * weight),
                None => *slot = Some(g.mapv(|v| v * weight)),
            }
        }
    }
}

/// One optimizer step over a sampled batch. Items are processed one graph at
/// a time in index order and their gradients averaged, which is exactly the
/// padded-batch objective (padded frames carry no loss) with none of the
/// padding.
pub fn train_step(
    step: u64,
    model: &mut VcModel,
    opt: &mut Adam,
    data: &Dataset,
    speaker_encoder: &ToySpeakerEncoder,
    cfg: &TrainingConfig,
) -> Result<StepMetrics> {
    let t0 = Instant::now();
    let mut pick =
        ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, &[tag::BATCH_SAMPLING, step]));
    let indices: Vec<usize> = (0..cfg.batch_size)
        .map(|_| pick.random_range(0..data.items.len() as u64) as usize)
        .collect();

    let mut grad_acc: Vec<Option<Array2<f64>>> = vec![None; model.store().len()];
    let weight = 1.0 / indices.len() as f64;
    let mut sums = [0.0f64; 5];
    let mut e_mid_l1_sum = 0.0;

    for (slot, &idx) in indices.iter().enumerate() {
        let item = &data.items[idx];
        let dropout =
            ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, &[tag::DROPOUT, step, slot as u64]));
        let mut tape = Tape::new();
        let mut f_model = Forward::new(model.store(), true, Some(dropout));

        let content = tape.constant(item.content.values.clone());
        let spk = tape.constant(item.spk.as_row());
        let x = tape.constant(item.mel.values.clone());
        let x_std = tape.constant(item.std_row.clone());

        let g = model.graph_training_forward(&mut tape, &mut f_model, speaker_encoder, content, spk)?;

        let red = cfg.l1_reduction;
        let l_mid = losses::graph::l1_to_zero(&mut tape, g.e_mid, red);
        let l_recon = losses::graph::reconstruction(&mut tape, x, g.mel_pred, red);
        let l_recon_post = losses::graph::reconstruction(&mut tape, x, g.mel_postnet, red);
        let l_std = losses::graph::std(&mut tape, x_std, g.mel_postnet, red);
        let l_spk = losses::graph::speaker(&mut tape, spk, g.s_hat);
        let total =
            losses::graph::total(&mut tape, l_mid, l_recon, l_recon_post, l_std, l_spk, cfg.lambda_spk);

        let parts = [
            tape.scalar(l_mid),
            tape.scalar(l_recon),
            tape.scalar(l_recon_post),
            tape.scalar(l_std),
            tape.scalar(l_spk),
        ];
        if parts.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!(
                    "utterance {}: l_mid_spk={} l_recon={} l_recon_postnet={} l_std={} l_spk={}",
                    item.utterance_id, parts[0], parts[1], parts[2], parts[3], parts[4]
                ),
            });
        }
        for (s, p) in sums.iter_mut().zip(parts) {
            *s += p * weight;
        }
        let e_mid_abs = tape.value(g.e_mid).iter().map(|v| v.abs()).sum::<f64>()
            / tape.value(g.e_mid).len() as f64;
        e_mid_l1_sum += e_mid_abs * weight;

        let mut grads = tape.backward(total);
        accumulate(&mut grad_acc, f_model.take_grads(&mut grads), weight);
    }

    opt.step(model.store_mut(), &grad_acc);

    let losses = LossBundle::new(sums[0], sums[1], sums[2], sums[3], sums[4], cfg.lambda_spk);
    Ok(StepMetrics {
        step,
        losses,
        e_mid_l1: e_mid_l1_sum,
        wall_time_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub final_step: u64,
}

/// Run (or resume) a training job and return the final checkpoint path.
///
/// Checkpoints land in `out_dir/ckpt-<step>.ckpt` at every
/// `checkpoint_interval` and at the final step; metrics append to
/// `out_dir/metrics.jsonl`.
#[allow(clippy::too_many_arguments)]
pub fn train(
    cfg: &TrainingConfig,
    model_cfg: &ModelConfig,
    data: &Dataset,
    content_encoder: &ContentAdapter,
    speaker_encoder: &ToySpeakerEncoder,
    out_dir: &Path,
    config_hash: &str,
    resume: Option<&Path>,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training dataset is empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let content_ck = content_encoder.checksum();
    let speaker_ck = speaker_encoder.checksum();

    let (mut model, mut opt, start_step) = match resume {
        None => {
            let model = VcModel::new(model_cfg, seeds::derive(cfg.seed, &[tag::MODEL_INIT]));
            let opt = Adam::new(model.store(), cfg.adam());
            (model, opt, 0)
        }
        Some(ckpt_path) => {
            let ckpt = load_checkpoint(ckpt_path, Some(config_hash))?;
            if ckpt.manifest.model != *model_cfg {
                return Err(Error::CheckpointMismatch(
                    "checkpoint architecture differs from the configured model".into(),
                ));
            }
            if ckpt.manifest.content_encoder_checksum != content_ck
                || ckpt.manifest.speaker_encoder_checksum != speaker_ck
            {
                return Err(Error::CheckpointMismatch(
                    "checkpoint was trained against different frozen encoders".into(),
                ));
            }
            let model = ckpt.model;
            let mut opt = Adam::new(model.store(), cfg.adam());
            match ckpt.opt_state {
                Some(state) => crate::nn::blob::apply_opt(&mut opt, state)?,
                None => {
                    return Err(Error::CheckpointMismatch(
                        "checkpoint lacks optimizer state; cannot resume".into(),
                    ))
                }
            }
            let step = ckpt.manifest.step;
            (model, opt, step)
        }
    };

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut writer = MetricsWriter::create(&metrics_path, resume.is_some())?;

    let ckpt_name = |step: u64| out_dir.join(format!("ckpt-{step:06}.ckpt"));
    let mut last_ckpt = ckpt_name(start_step);
    if cfg.max_steps == start_step || cfg.max_steps == 0 {
        // Nothing to run; the checkpoint is the (restored or fresh) state.
        save_checkpoint(&last_ckpt, &model, Some(&opt), start_step, config_hash, &content_ck, &speaker_ck)?;
        return Ok(TrainOutcome { checkpoint_path: last_ckpt, metrics_path, final_step: start_step });
    }
    if start_step > cfg.max_steps {
        return Err(Error::Validation(format!(
            "checkpoint is at step {start_step}, beyond max_steps {}",
            cfg.max_steps
        )));
    }

    for step in start_step + 1..=cfg.max_steps {
        let m = train_step(step, &mut model, &mut opt, data, speaker_encoder, cfg)?;
        writer.write(&MetricsRecord::new(step, &m.losses, m.e_mid_l1))?;
        on_step(&m);
        if step % cfg.checkpoint_interval == 0 || step == cfg.max_steps {
            writer.flush()?;
            last_ckpt = ckpt_name(step);
            save_checkpoint(&last_ckpt, &model, Some(&opt), step, config_hash, &content_ck, &speaker_ck)?;
        }
    }
    writer.flush()?;

    Ok(TrainOutcome { checkpoint_path: last_ckpt, metrics_path, final_step: cfg.max_steps })
}

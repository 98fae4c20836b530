//! The conversion network.
//!
//! Two paths share one transformer "manipulator". The remover takes content
//! features concatenated with a frame-broadcast speaker embedding through
//! PreNet1 into the manipulator, producing a Mel-space intermediate
//! representation that is supervised to carry no speaker information. The
//! adder projects that intermediate back up through the Mel embedding layer,
//! concatenates the (possibly different) speaker embedding, and runs PreNet2
//! into the *same* manipulator instance to predict a Mel-spectrogram, which
//! a residual PostNet then refines.
//!
//! Sharing is structural: both paths call one module holding one parameter
//! set, so no optimizer step can ever make them diverge.

pub mod checkpoint;

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::encoders::{
    ContentFeature, EmbeddingSource, SpeakerEmbedding, ToyContentEncoder, ToySpeakerEncoder,
};
use crate::error::{Error, Result};
use crate::nn::{
    positional_encoding, Conv1d, FftBlock, Forward, Linear, ParamId, ParamStore, PreNet,
};
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_mel: usize,
    pub d_content: usize,
    pub d_speaker: usize,
    /// Manipulator width.
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub prenet_hidden: usize,
    pub prenet_dropout: f64,
    pub postnet_layers: usize,
    pub postnet_kernel: usize,
    pub postnet_channels: usize,
    /// Positional-encoding table length; the longest supported utterance.
    pub max_frames: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_mel: 80,
            d_content: 64,
            d_speaker: 192,
            d_model: 256,
            heads: 2,
            d_ff: 1024,
            encoder_blocks: 2,
            decoder_blocks: 2,
            prenet_hidden: 256,
            prenet_dropout: 0.2,
            postnet_layers: 5,
            postnet_kernel: 5,
            postnet_channels: 256,
            max_frames: 2048,
        }
    }
}

/// Mel-space output of the speaker-information remover.
#[derive(Debug, Clone)]
pub struct IntermediateRepresentation {
    pub values: Array2<f64>,
}

/// Everything one training-style forward produces.
#[derive(Debug, Clone)]
pub struct ForwardBundle {
    pub intermediate: IntermediateRepresentation,
    pub mel_pred: Array2<f64>,
    pub mel_postnet: Array2<f64>,
    pub e_mid: SpeakerEmbedding,
    pub s_hat: SpeakerEmbedding,
}

/// Graph-node handles for one recorded forward, for loss wiring.
pub struct GraphBundle {
    pub mid: Var,
    pub e_mid: Var,
    pub mel_pred: Var,
    pub mel_postnet: Var,
    pub s_hat: Var,
}

/// The shared speaker-information manipulator: positional encoding, the
/// transformer stack, and the Mel-linear output head.
struct Manipulator {
    blocks: Vec<FftBlock>,
    mel_linear: Linear,
    pe: Array2<f64>,
}

impl Manipulator {
    fn forward(&self, tape: &mut Tape, f: &mut Forward, x: Var) -> Var {
        let (t, _) = tape.shape(x);
        let pe = tape.constant(self.pe.slice(ndarray::s![..t, ..]).to_owned());
        let mut h = tape.add(x, pe);
        for block in &self.blocks {
            h = block.forward(tape, f, h);
        }
        self.mel_linear.forward(tape, f, h)
    }
}

pub struct VcModel {
    pub cfg: ModelConfig,
    store: ParamStore,
    prenet1: PreNet,
    prenet2: PreNet,
    mel_embedding: Linear,
    manipulator: Manipulator,
    postnet: Vec<Conv1d>,
    /// Store indices of the manipulator parameters (transformer stack plus
    /// Mel-linear head), used by the sharing assertions.
    manipulator_params: Vec<ParamId>,
}

impl VcModel {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Self {
        assert!(cfg.d_model % cfg.heads == 0, "d_model must divide into heads");
        assert!(cfg.postnet_layers >= 2, "postnet needs an input and an output layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();

        let prenet1 = PreNet::new(
            &mut store,
            &mut rng,
            "prenet1",
            cfg.d_content + cfg.d_speaker,
            cfg.prenet_hidden,
            cfg.d_model,
            cfg.prenet_dropout,
        );
        let prenet2 = PreNet::new(
            &mut store,
            &mut rng,
            "prenet2",
            cfg.d_model + cfg.d_speaker,
            cfg.prenet_hidden,
            cfg.d_model,
            cfg.prenet_dropout,
        );
        let mel_embedding =
            Linear::new(&mut store, &mut rng, "mel_embedding", cfg.d_mel, cfg.d_model);

        let manip_start = store.len();
        let mut blocks = Vec::new();
        for i in 0..cfg.encoder_blocks {
            blocks.push(FftBlock::new(
                &mut store,
                &mut rng,
                &format!("manipulator.encoder{i}"),
                cfg.d_model,
                cfg.heads,
                cfg.d_ff,
            ));
        }
        for i in 0..cfg.decoder_blocks {
            blocks.push(FftBlock::new(
                &mut store,
                &mut rng,
                &format!("manipulator.decoder{i}"),
                cfg.d_model,
                cfg.heads,
                cfg.d_ff,
            ));
        }
        let mel_linear =
            Linear::new(&mut store, &mut rng, "manipulator.mel_linear", cfg.d_model, cfg.d_mel);
        let manipulator_params = (manip_start..store.len()).map(ParamId).collect();

        let mut postnet = Vec::new();
        for i in 0..cfg.postnet_layers {
            let c_in = if i == 0 { cfg.d_mel } else { cfg.postnet_channels };
            let c_out =
                if i == cfg.postnet_layers - 1 { cfg.d_mel } else { cfg.postnet_channels };
            let name = format!("postnet.conv{i}");
            let conv = if i == cfg.postnet_layers - 1 {
                // Zero-initialized final layer: the postnet starts as an
                // exact identity around the residual connection.
                Conv1d::new_zeroed(&mut store, &name, c_in, c_out, cfg.postnet_kernel)
            } else {
                Conv1d::new(&mut store, &mut rng, &name, c_in, c_out, cfg.postnet_kernel)
            };
            postnet.push(conv);
        }

        let pe = positional_encoding(cfg.max_frames, cfg.d_model);
        VcModel {
            cfg: cfg.clone(),
            store,
            prenet1,
            prenet2,
            mel_embedding,
            manipulator: Manipulator { blocks, mel_linear, pe },
            postnet,
            manipulator_params,
        }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn checksum(&self) -> String {
        self.store.checksum()
    }

    pub fn manipulator_param_ids(&self) -> &[ParamId] {
        &self.manipulator_params
    }

    fn check_frames(&self, t: usize) -> Result<()> {
        if t > self.cfg.max_frames {
            return Err(Error::Shape(format!(
                "{t} frames exceeds the configured maximum {}",
                self.cfg.max_frames
            )));
        }
        Ok(())
    }

    // ---- graph builders -------------------------------------------------

    /// Remover: content + broadcast speaker embedding -> PreNet1 -> shared
    /// manipulator -> `[T, d_mel]`.
    pub fn graph_remove(
        &self,
        tape: &mut Tape,
        f: &mut Forward,
        content: Var,
        spk: Var,
    ) -> Result<Var> {
        let (t, dc) = tape.shape(content);
        self.check_frames(t)?;
        if dc != self.cfg.d_content {
            return Err(Error::Shape(format!(
                "content features have {dc} dims, model expects {}",
                self.cfg.d_content
            )));
        }
        let (_, ds) = tape.shape(spk);
        if ds != self.cfg.d_speaker {
            return Err(Error::DimensionMismatch { expected: self.cfg.d_speaker, got: ds });
        }
        let spk_rep = tape.repeat_rows(spk, t);
        let cat = tape.concat_cols(content, spk_rep);
        let h = self.prenet1.forward(tape, f, cat);
        Ok(self.manipulator.forward(tape, f, h))
    }

    /// Adder: Mel embedding of the intermediate + broadcast speaker
    /// embedding -> PreNet2 -> the same shared manipulator -> `[T, d_mel]`.
    pub fn graph_add(
        &self,
        tape: &mut Tape,
        f: &mut Forward,
        mid: Var,
        spk: Var,
    ) -> Result<Var> {
        let (t, dm) = tape.shape(mid);
        self.check_frames(t)?;
        if dm != self.cfg.d_mel {
            return Err(Error::Shape(format!(
                "intermediate has {dm} bins, model expects {}",
                self.cfg.d_mel
            )));
        }
        let (_, ds) = tape.shape(spk);
        if ds != self.cfg.d_speaker {
            return Err(Error::DimensionMismatch { expected: self.cfg.d_speaker, got: ds });
        }
        let embedded = self.mel_embedding.forward(tape, f, mid);
        let spk_rep = tape.repeat_rows(spk, t);
        let cat = tape.concat_cols(embedded, spk_rep);
        let h = self.prenet2.forward(tape, f, cat);
        Ok(self.manipulator.forward(tape, f, h))
    }

    /// Residual refinement: `x + postnet(x)`.
    pub fn graph_postnet(&self, tape: &mut Tape, f: &mut Forward, mel: Var) -> Result<Var> {
        let (_, dm) = tape.shape(mel);
        if dm != self.cfg.d_mel {
            return Err(Error::Shape(format!(
                "postnet input has {dm} bins, model expects {}",
                self.cfg.d_mel
            )));
        }
        let mut h = mel;
        let last = self.postnet.len() - 1;
        for (i, conv) in self.postnet.iter().enumerate() {
            h = conv.forward(tape, f, h);
            if i < last {
                h = tape.tanh(h);
            }
        }
        Ok(tape.add(mel, h))
    }

    /// The full training composition on one tape: remove with the same
    /// utterance's speaker embedding, re-add it, refine, and read both
    /// supervision embeddings through the frozen speaker encoder.
    ///
    /// `content` and `spk` are constants (their encoders are frozen);
    /// gradients flow through the speaker encoder's ops into `mid` and
    /// `mel_postnet`.
    pub fn graph_training_forward(
        &self,
        tape: &mut Tape,
        f_model: &mut Forward,
        speaker_encoder: &ToySpeakerEncoder,
        content: Var,
        spk: Var,
    ) -> Result<GraphBundle> {
        let mid = self.graph_remove(tape, f_model, content, spk)?;
        let mut f_spk = Forward::new(speaker_encoder.store(), false, None);
        let e_mid = speaker_encoder.graph_forward(tape, &mut f_spk, mid)?;
        let mel_pred = self.graph_add(tape, f_model, mid, spk)?;
        let mel_postnet = self.graph_postnet(tape, f_model, mel_pred)?;
        let s_hat = speaker_encoder.graph_forward(tape, &mut f_spk, mel_postnet)?;
        Ok(GraphBundle { mid, e_mid, mel_pred, mel_postnet, s_hat })
    }

    // ---- evaluation-mode operations -------------------------------------

    fn eval_forward(&self) -> Forward<'_> {
        Forward::new(&self.store, false, None)
    }

    pub fn remove_speaker_info(
        &self,
        content: &ContentFeature,
        spk: &SpeakerEmbedding,
    ) -> Result<IntermediateRepresentation> {
        let mut tape = Tape::new();
        let mut f = self.eval_forward();
        let c = tape.constant(content.values.clone());
        let s = tape.constant(spk.as_row());
        let mid = self.graph_remove(&mut tape, &mut f, c, s)?;
        Ok(IntermediateRepresentation { values: tape.value(mid).clone() })
    }

    pub fn add_speaker_info(
        &self,
        mid: &IntermediateRepresentation,
        spk: &SpeakerEmbedding,
    ) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let mut f = self.eval_forward();
        let m = tape.constant(mid.values.clone());
        let s = tape.constant(spk.as_row());
        let mel = self.graph_add(&mut tape, &mut f, m, s)?;
        Ok(tape.value(mel).clone())
    }

    pub fn postnet_refine(&self, mel: &Array2<f64>) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let mut f = self.eval_forward();
        let m = tape.constant(mel.clone());
        let out = self.graph_postnet(&mut tape, &mut f, m)?;
        Ok(tape.value(out).clone())
    }

    /// Deterministic full forward for one utterance (no dropout): extracts
    /// content and speaker embedding, removes and re-adds the speaker, and
    /// reads the two supervision embeddings.
    pub fn training_forward(
        &self,
        mel_in: &MelSpectrogram,
        content_encoder: &ToyContentEncoder,
        speaker_encoder: &ToySpeakerEncoder,
    ) -> Result<ForwardBundle> {
        mel_in.validate()?;
        let content = content_encoder.extract(mel_in)?;
        let spk = speaker_encoder.embed(mel_in)?;
        self.training_forward_cached(&content, &spk, speaker_encoder)
    }

    /// Same as [`Self::training_forward`] with pre-extracted inputs.
    pub fn training_forward_cached(
        &self,
        content: &ContentFeature,
        spk: &SpeakerEmbedding,
        speaker_encoder: &ToySpeakerEncoder,
    ) -> Result<ForwardBundle> {
        let mut tape = Tape::new();
        let mut f = self.eval_forward();
        let c = tape.constant(content.values.clone());
        let s = tape.constant(spk.as_row());
        let g = self.graph_training_forward(&mut tape, &mut f, speaker_encoder, c, s)?;
        Ok(ForwardBundle {
            intermediate: IntermediateRepresentation { values: tape.value(g.mid).clone() },
            mel_pred: tape.value(g.mel_pred).clone(),
            mel_postnet: tape.value(g.mel_postnet).clone(),
            e_mid: SpeakerEmbedding {
                values: tape.value(g.e_mid).row(0).to_owned(),
                source: EmbeddingSource::IntermediateRepresentation,
            },
            s_hat: SpeakerEmbedding {
                values: tape.value(g.s_hat).row(0).to_owned(),
                source: EmbeddingSource::ReferenceAudio,
            },
        })
    }
}

//! Self-attention blocks in the FastSpeech mold: multi-head attention and a
//! wide feed-forward, each wrapped in residual + layer norm.

use rand_chacha::ChaCha8Rng;

use super::layers::{LayerNorm, Linear};
use super::params::{Forward, ParamStore};
use crate::tensor::{Tape, Var};

pub struct MultiHeadAttention {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    heads: usize,
    d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_model: usize,
        heads: usize,
    ) -> Self {
        assert!(d_model % heads == 0, "d_model must divide into heads");
        MultiHeadAttention {
            wq: Linear::new(store, rng, &format!("{name}.wq"), d_model, d_model),
            wk: Linear::new(store, rng, &format!("{name}.wk"), d_model, d_model),
            wv: Linear::new(store, rng, &format!("{name}.wv"), d_model, d_model),
            wo: Linear::new(store, rng, &format!("{name}.wo"), d_model, d_model),
            heads,
            d_model,
        }
    }

    pub fn forward(&self, tape: &mut Tape, f: &mut Forward, x: Var) -> Var {
        let q = self.wq.forward(tape, f, x);
        let k = self.wk.forward(tape, f, x);
        let v = self.wv.forward(tape, f, x);

        let dh = self.d_model / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut head_outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, lo, hi);
            let kh = tape.slice_cols(k, lo, hi);
            let vh = tape.slice_cols(v, lo, hi);
            let logits = tape.matmul_nt(qh, kh);
            let logits = tape.scale(logits, scale);
            let attn = tape.softmax_rows(logits);
            head_outputs.push(tape.matmul(attn, vh));
        }
        let mut cat = head_outputs[0];
        for &h in &head_outputs[1..] {
            cat = tape.concat_cols(cat, h);
        }
        self.wo.forward(tape, f, cat)
    }
}

pub struct FftBlock {
    attn: MultiHeadAttention,
    norm1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    norm2: LayerNorm,
}

impl FftBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_model: usize,
        heads: usize,
        d_ff: usize,
    ) -> Self {
        FftBlock {
            attn: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), d_model, heads),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            ff1: Linear::new(store, rng, &format!("{name}.ff1"), d_model, d_ff),
            ff2: Linear::new(store, rng, &format!("{name}.ff2"), d_ff, d_model),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
        }
    }

    pub fn forward(&self, tape: &mut Tape, f: &mut Forward, x: Var) -> Var {
        let a = self.attn.forward(tape, f, x);
        let res = tape.add(x, a);
        let x = self.norm1.forward(tape, f, res);

        let h = self.ff1.forward(tape, f, x);
        let h = tape.relu(h);
        let h = self.ff2.forward(tape, f, h);
        let res = tape.add(x, h);
        self.norm2.forward(tape, f, res)
    }
}

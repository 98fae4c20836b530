//! Layers used by the acoustic model and the toy encoders.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::params::{glorot, Forward, ParamId, ParamStore};
use crate::tensor::{Tape, Var};

/// Fully connected layer; weight `[d_in, d_out]`, bias `[1, d_out]`.
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        let w = store.add(format!("{name}.w"), glorot(rng, d_in, d_out));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, d_out)));
        Linear { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, f: &mut Forward, x: Var) -> Var {
        let w = f.param(tape, self.w);
        let b = f.param(tape, self.b);
        let h = tape.matmul(x, w);
        tape.add_row_broadcast(h, b)
    }
}

/// 1-D convolution along time with same-length zero padding.
/// Weight `[k * c_in, c_out]`, bias `[1, c_out]`.
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
    ) -> Self {
        assert!(kernel % 2 == 1);
        let w = store.add(format!("{name}.w"), glorot(rng, kernel * c_in, c_out));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, c_out)));
        Conv1d { w, b, kernel }
    }

    /// All-zero weights and bias; the layer starts as a constant-zero map.
    pub fn new_zeroed(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
    ) -> Self {
        assert!(kernel % 2 == 1);
        let w = store.add(format!("{name}.w"), Array2::zeros((kernel * c_in, c_out)));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, c_out)));
        Conv1d { w, b, kernel }
    }

    pub fn forward(&self, tape: &mut Tape, f: &mut Forward, x: Var) -> Var {
        let w = f.param(tape, self.w);
        let b = f.param(tape, self.b);
        let unfolded = tape.unfold_time(x, self.kernel);
        let h = tape.matmul(unfolded, w);
        tape.add_row_broadcast(h, b)
    }
}

/// Learned per-feature normalization.
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Array2::ones((1, d)));
        let beta = store.add(format!("{name}.beta"), Array2::zeros((1, d)));
        LayerNorm { gamma, beta }
    }

    pub fn forward(&self, tape: &mut Tape, f: &mut Forward, x: Var) -> Var {
        let g = f.param(tape, self.gamma);
        let b = f.param(tape, self.beta);
        tape.layer_norm(x, g, b, 1e-5)
    }
}

/// Two linear layers, each followed by relu and dropout.
pub struct PreNet {
    l1: Linear,
    l2: Linear,
    pub dropout: f64,
}

impl PreNet {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        dropout: f64,
    ) -> Self {
        PreNet {
            l1: Linear::new(store, rng, &format!("{name}.l1"), d_in, d_hidden),
            l2: Linear::new(store, rng, &format!("{name}.l2"), d_hidden, d_out),
            dropout,
        }
    }

    pub fn forward(&self, tape: &mut Tape, f: &mut Forward, x: Var) -> Var {
        let h = self.l1.forward(tape, f, x);
        let h = tape.relu(h);
        let h = f.dropout(tape, h, self.dropout);
        let h = self.l2.forward(tape, f, h);
        let h = tape.relu(h);
        f.dropout(tape, h, self.dropout)
    }
}

/// Sinusoidal positional encoding table `[max_len, d]`.
pub fn positional_encoding(max_len: usize, d: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((max_len, d));
    for pos in 0..max_len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            pe[[pos, i]] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn linear_shapes_and_grads_reach_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, &mut rng, "lin", 4, 6);
        let mut tape = Tape::new();
        let mut f = Forward::new(&store, true, None);
        let x = tape.constant(Array2::ones((5, 4)));
        let y = lin.forward(&mut tape, &mut f, x);
        assert_eq!(tape.shape(y), (5, 6));
        let out = tape.mean_all(y);
        let mut grads = tape.backward(out);
        let collected = f.take_grads(&mut grads);
        assert!(collected.iter().all(|g| g.is_some()));
    }

    #[test]
    fn conv_preserves_time_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, &mut rng, "c", 8, 16, 5);
        let mut tape = Tape::new();
        let mut f = Forward::new(&store, false, None);
        let x = tape.constant(Array2::ones((11, 8)));
        let y = conv.forward(&mut tape, &mut f, x);
        assert_eq!(tape.shape(y), (11, 16));
    }

    #[test]
    fn zeroed_conv_outputs_zero() {
        let mut store = ParamStore::new();
        let conv = Conv1d::new_zeroed(&mut store, "z", 4, 4, 5);
        let mut tape = Tape::new();
        let mut f = Forward::new(&store, false, None);
        let x = tape.constant(Array2::from_elem((7, 4), 3.3));
        let y = conv.forward(&mut tape, &mut f, x);
        assert!(tape.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positional_encoding_is_bounded_and_position_dependent() {
        let pe = positional_encoding(64, 16);
        assert!(pe.iter().all(|v| v.abs() <= 1.0));
        assert_ne!(pe.row(0), pe.row(1));
        // Even columns start at sin(0) = 0, odd at cos(0) = 1.
        assert_eq!(pe[[0, 0]], 0.0);
        assert_eq!(pe[[0, 1]], 1.0);
    }
}

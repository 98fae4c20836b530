//! Named parameter storage and the leasing bridge onto a [`Tape`].

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::tensor::{Gradients, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Ordered collection of named f64 matrices. Registration order is the
/// canonical order for initialization, checkpoints, and checksums.
#[derive(Default, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// SHA-256 over names, shapes, and little-endian f64 bytes in
    /// registration order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, value) in self.iter() {
            h.update(name.as_bytes());
            h.update((value.nrows() as u64).to_le_bytes());
            h.update((value.ncols() as u64).to_le_bytes());
            for &v in value.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex_string(&h.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Glorot-uniform initialized matrix; fans are the two dimensions.
pub fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

/// One store's view of a forward pass: leases parameters onto a tape as
/// trainable or constant leaves, and carries the dropout source (absent in
/// evaluation). Several `Forward`s may share one tape, so the tape is passed
/// per call rather than borrowed.
pub struct Forward<'s> {
    store: &'s ParamStore,
    leased: Vec<Option<Var>>,
    trainable: bool,
    pub dropout_rng: Option<ChaCha8Rng>,
}

impl<'s> Forward<'s> {
    pub fn new(store: &'s ParamStore, trainable: bool, dropout_rng: Option<ChaCha8Rng>) -> Self {
        Forward { leased: vec![None; store.len()], store, trainable, dropout_rng }
    }

    /// Leaf node for a parameter, created once per pass.
    pub fn param(&mut self, tape: &mut Tape, id: ParamId) -> Var {
        if let Some(v) = self.leased[id.0] {
            return v;
        }
        let v = tape.leaf(self.store.get(id).clone(), self.trainable);
        self.leased[id.0] = Some(v);
        v
    }

    /// Inverted dropout; identity when no rng is attached (evaluation) or
    /// when `p == 0`.
    pub fn dropout(&mut self, tape: &mut Tape, x: Var, p: f64) -> Var {
        let Some(rng) = self.dropout_rng.as_mut() else { return x };
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let dim = tape.shape(x);
        let mask = Array2::from_shape_fn(dim, |_| {
            if rng.random_range(0.0..1.0) < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let m = tape.constant(mask);
        tape.mul(x, m)
    }

    /// Pull the accumulated gradient for every leased trainable parameter,
    /// indexed like the store. Parameters never touched get `None`.
    pub fn take_grads(&self, grads: &mut Gradients) -> Vec<Option<Array2<f64>>> {
        self.leased.iter().map(|slot| slot.and_then(|v| grads.take(v))).collect()
    }
}

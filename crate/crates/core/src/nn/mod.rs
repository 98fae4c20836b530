//! Building blocks for the networks: parameter storage, layers, and
//! transformer blocks, all recording onto [`crate::tensor::Tape`].

pub mod adam;
pub mod blob;
mod layers;
mod params;
mod transformer;

pub use adam::{Adam, AdamConfig};
pub use layers::{positional_encoding, Conv1d, LayerNorm, Linear, PreNet};
pub use params::{glorot, Forward, ParamId, ParamStore};
pub use transformer::{FftBlock, MultiHeadAttention};

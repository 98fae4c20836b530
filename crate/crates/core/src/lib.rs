//! Voice conversion built around supervised removal of speaker information.
//!
//! The pipeline: audio is reduced to log-Mel spectrograms, a frozen content
//! encoder and a frozen speaker encoder describe what was said and who said
//! it, and a pair of manipulator paths with shared transformer weights first
//! strips the speaker from the content stream and then paints a (possibly
//! different) speaker back on. The intermediate representation between the two
//! paths is directly supervised to carry no speaker information, which is what
//! makes zero-shot conversion work.
//!
//! Crate layout follows the processing order: [`dsp`] for features, [`encoders`]
//! for the frozen describers, [`model`] for the manipulator network, [`losses`]
//! and [`training`] for optimization, [`convert`] for inference, and
//! [`evaluation`] for objective speaker-similarity reporting.

pub mod config;
pub mod convert;
pub mod corpus;
pub mod dsp;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod model;
pub mod nn;
pub mod seeds;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

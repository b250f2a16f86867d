//! Black-box watermarking for CTC speech recognizers.
//!
//! Triggers are clean utterances with a tiled secret owner clip mixed in;
//! their labels are stego sentences hiding the owner's bit message. A model
//! fine-tuned on them transcribes triggers as stegos, and the owner later
//! recovers the message from the text outputs alone.

pub mod asr;
pub mod attacks;
pub mod audio;
mod binio;
pub mod datagen;
pub mod error;
pub mod metrics;
pub mod scalar;
pub mod seed;
pub mod stego;
pub mod text;
pub mod watermark;

pub use error::{Error, Result};
pub use scalar::Real;

/// Audio at working precision.
pub type Clip = audio::AudioClip<f64>;
/// Recognizer at training precision.
pub type Model = asr::AsrModel<f32>;
/// Recognizer at full precision, used by gradient checks.
pub type Model64 = asr::AsrModel<f64>;

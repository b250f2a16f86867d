//! Toy CTC speech recognizer: frontend, recurrent acoustic model, CTC, training.

pub mod ctc;
pub mod features;
mod checkpoint;
mod model;
pub mod network;
mod train;
pub mod vocab;

pub use ctc::{ctc_loss, greedy_decode, greedy_labels, min_frames, CtcOutput};
pub use features::{extract_features, FeatureFrames, FrontendConfig};
pub use model::{predict, AsrModel, Hyperparams, Optimizer, WeightMask};
pub use train::{train, train_with, TrainOptions, TrainReport};
pub use vocab::Vocab;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// One labelled training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    id: String,
    audio: AudioClip<f64>,
    transcript: String,
}

impl Utterance {
    /// The transcript must already be normalized and non-empty.
    pub fn new(id: &str, audio: AudioClip<f64>, transcript: &str) -> Result<Self> {
        if transcript.is_empty() {
            return Err(Error::invalid(format!("utterance {id}: empty transcript")));
        }
        if crate::text::normalize_transcript(transcript) != transcript {
            return Err(Error::invalid(format!("utterance {id}: transcript {transcript:?} is not normalized")));
        }
        Ok(Self {
            id: id.to_string(),
            audio,
            transcript: transcript.to_string(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn audio(&self) -> &AudioClip<f64> {
        &self.audio
    }

    pub fn transcript(&self) -> &str {
        &self.transcript
    }

    /// Same audio under a different label.
    pub fn relabel(&self, transcript: &str) -> Result<Self> {
        Self::new(&self.id, self.audio.clone(), transcript)
    }
}

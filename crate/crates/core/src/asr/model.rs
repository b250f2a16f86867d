use crate::asr::ctc::greedy_decode;
use crate::asr::features::{extract_features, FeatureFrames, FrontendConfig};
use crate::asr::network::Network;
use crate::asr::vocab::Vocab;
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Heavy-ball momentum SGD.
    Momentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn momentum() -> Self {
        Optimizer::Momentum { momentum: 0.9 }
    }

    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Momentum { .. } => "momentum",
            Optimizer::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub hidden: usize,
    pub bidirectional: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global gradient norm is clipped to this value before each step.
    pub clip_norm: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            hidden: 128,
            bidirectional: true,
            learning_rate: 0.02,
            batch_size: 8,
            clip_norm: 1.0,
            optimizer: Optimizer::momentum(),
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("hidden size and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::InvalidConfig("clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// Positions forced to zero, one flag vector per parameter tensor
/// (empty when a tensor has no mask).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMask {
    pub(crate) zeroed: Vec<Vec<bool>>,
}

impl WeightMask {
    /// One flag vector per parameter tensor, in [`Network::tensors`] order;
    /// `true` marks a weight held at zero. Shapes are checked by [`AsrModel::set_mask`].
    pub fn new(zeroed: Vec<Vec<bool>>) -> Self {
        Self { zeroed }
    }

    pub fn tensor(&self, idx: usize) -> &[bool] {
        &self.zeroed[idx]
    }

    pub fn zeroed_count(&self) -> usize {
        self.zeroed.iter().flatten().filter(|&&z| z).count()
    }

    pub(crate) fn apply<T: Real>(&self, net: &mut Network<T>) {
        for (tensor, mask) in net.tensors_mut().into_iter().zip(&self.zeroed) {
            for (w, _) in tensor.iter_mut().zip(mask).filter(|(_, &z)| z) {
                *w = T::zero();
            }
        }
    }
}

/// Frontend, vocabulary, network and the hyperparameters it trains with.
#[derive(Debug, Clone, PartialEq)]
pub struct AsrModel<T = f32> {
    pub(crate) vocab: Vocab,
    pub(crate) frontend: FrontendConfig,
    pub(crate) hyper: Hyperparams,
    pub(crate) net: Network<T>,
    pub(crate) mask: Option<WeightMask>,
}

impl<T: Real> AsrModel<T> {
    /// Randomly initialized model; weights are drawn from `hyper.seed`.
    pub fn new(vocab: Vocab, frontend: FrontendConfig, hyper: Hyperparams) -> Result<Self> {
        frontend.validate()?;
        hyper.validate()?;
        let net = Network::new(
            frontend.n_filters,
            hyper.hidden,
            vocab.num_classes(),
            hyper.bidirectional,
            crate::seed::derive_seed(hyper.seed, "init"),
        );
        Ok(Self {
            vocab,
            frontend,
            hyper,
            net,
            mask: None,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn frontend(&self) -> &FrontendConfig {
        &self.frontend
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn mask(&self) -> Option<&WeightMask> {
        self.mask.as_ref()
    }

    pub fn parameter_count(&self) -> usize {
        self.net.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// Installs a pruning mask and zeroes the masked weights. Training keeps them at zero.
    pub fn set_mask(&mut self, mask: WeightMask) -> Result<()> {
        let shapes: Vec<usize> = self.net.tensors().iter().map(|(_, _, t)| t.len()).collect();
        if mask.zeroed.len() != shapes.len()
            || mask.zeroed.iter().zip(&shapes).any(|(m, &n)| !m.is_empty() && m.len() != n)
        {
            return Err(Error::invalid("mask shape does not match the network"));
        }
        mask.apply(&mut self.net);
        self.mask = Some(mask);
        Ok(())
    }

    pub fn features(&self, clip: &AudioClip<f64>) -> Result<FeatureFrames<T>> {
        extract_features(clip, &self.frontend)
    }

    /// Per-frame log probabilities, `frames x classes` row-major.
    pub fn log_probs(&self, clip: &AudioClip<f64>) -> Result<(Vec<T>, usize)> {
        let feats = self.features(clip)?;
        let trace = self.net.forward(feats.data(), feats.frames());
        Ok((trace.log_probs, feats.frames()))
    }

    pub fn predict(&self, clip: &AudioClip<f64>) -> Result<String> {
        let (lp, _) = self.log_probs(clip)?;
        Ok(greedy_decode(&lp, &self.vocab))
    }

    /// Converts every weight to another scalar type.
    pub fn cast<U: Real>(&self) -> AsrModel<U> {
        let mut net: Network<U> = Network::new(
            self.net.input_dim,
            self.net.hidden,
            self.net.classes(),
            self.net.bidirectional(),
            0,
        );
        for (dst, (_, _, src)) in net.tensors_mut().into_iter().zip(self.net.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = U::lit(s.as_f64());
            }
        }
        AsrModel {
            vocab: self.vocab.clone(),
            frontend: self.frontend,
            hyper: self.hyper.clone(),
            net,
            mask: self.mask.clone(),
        }
    }
}

/// Transcribes `clip` with `model`.
pub fn predict<T: Real>(model: &AsrModel<T>, clip: &AudioClip<f64>) -> Result<String> {
    model.predict(clip)
}

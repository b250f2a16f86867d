//! Mini-batch training with CTC loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::asr::ctc::ctc_loss;
use crate::asr::model::{AsrModel, Optimizer};
use crate::asr::network::Network;
use crate::asr::Utterance;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub optimizer: Optimizer,
    /// Learning rate of the last epoch as a fraction of the first; the rate
    /// falls linearly in between. `1.0` keeps it constant.
    pub final_lr_fraction: f64,
    /// Drives the per-epoch shuffles.
    pub seed: u64,
}

impl TrainOptions {
    /// Options taken from the model's own hyperparameters.
    pub fn for_model<T>(model: &AsrModel<T>, epochs: usize, learning_rate: f64) -> Self {
        let h = &model.hyper;
        Self {
            epochs,
            learning_rate,
            batch_size: h.batch_size,
            clip_norm: h.clip_norm,
            optimizer: h.optimizer,
            final_lr_fraction: 1.0,
            seed: derive_seed(h.seed, "shuffle"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-utterance CTC loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Utterances dropped because their audio is too short for the label.
    pub skipped: Vec<String>,
}

struct Example<T> {
    features: Vec<T>,
    frames: usize,
    labels: Vec<usize>,
}

/// Trains with the model's own batch size, clipping, optimizer and seed.
pub fn train<T: Real>(
    model: &AsrModel<T>,
    data: &[Utterance],
    epochs: usize,
    learning_rate: f64,
) -> Result<(AsrModel<T>, TrainReport)> {
    train_with(model, data, &TrainOptions::for_model(model, epochs, learning_rate))
}

pub fn train_with<T: Real>(
    model: &AsrModel<T>,
    data: &[Utterance],
    opts: &TrainOptions,
) -> Result<(AsrModel<T>, TrainReport)> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if !(opts.learning_rate > 0.0 && opts.learning_rate.is_finite()) {
        return Err(Error::invalid(format!("learning rate {} must be positive", opts.learning_rate)));
    }
    if !(opts.final_lr_fraction > 0.0 && opts.final_lr_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "final learning-rate fraction {} must lie in (0, 1]",
            opts.final_lr_fraction
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }

    let mut model = model.clone();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(opts.epochs),
        skipped: Vec::new(),
    };
    if opts.epochs == 0 {
        return Ok((model, report));
    }

    let mut examples = Vec::with_capacity(data.len());
    for utt in data {
        let feats = model.features(utt.audio())?;
        let labels = model.vocab.encode(utt.transcript())?;
        if feats.frames() < crate::asr::ctc::min_frames(&labels) {
            log::warn!("skipping {}: {} frames cannot carry {} labels", utt.id(), feats.frames(), labels.len());
            report.skipped.push(utt.id().to_string());
            continue;
        }
        examples.push(Example {
            frames: feats.frames(),
            features: feats.data().to_vec(),
            labels,
        });
    }
    if examples.is_empty() {
        return Err(Error::invalid("no utterance is long enough for its transcript"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut opt = OptimizerState::new(&model.net, opts.optimizer);
    let blank = model.vocab.blank();
    let classes = model.vocab.num_classes();

    for epoch in 0..opts.epochs {
        let progress = if opts.epochs > 1 { epoch as f64 / (opts.epochs - 1) as f64 } else { 0.0 };
        let lr = opts.learning_rate * (1.0 - (1.0 - opts.final_lr_fraction) * progress);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch_idx, batch) in order.chunks(opts.batch_size).enumerate() {
            let mut grad = model.net.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &examples[i];
                let trace = model.net.forward(&ex.features, ex.frames);
                let out = ctc_loss(&trace.log_probs, classes, &ex.labels, blank)?;
                batch_loss += out.loss.as_f64();
                model.net.backward(&trace, &out.grad, &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: batch_idx });
            }
            total += batch_loss;

            let scale = T::lit(1.0 / batch.len() as f64);
            let mut grads: Vec<&mut Vec<T>> = grad.tensors_mut();
            for g in grads.iter_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            if let Some(mask) = &model.mask {
                for (g, m) in grads.iter_mut().zip(&mask.zeroed) {
                    for (v, _) in g.iter_mut().zip(m).filter(|(_, &z)| z) {
                        *v = T::zero();
                    }
                }
            }
            let norm = grads
                .iter()
                .flat_map(|g| g.iter())
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() {
                return Err(Error::Divergence { epoch, batch: batch_idx });
            }
            let clip = if norm > opts.clip_norm { opts.clip_norm / norm } else { 1.0 };
            opt.step(&mut model.net, grads, lr, clip);
            if let Some(mask) = &model.mask {
                mask.apply(&mut model.net);
            }
        }
        let mean = total / examples.len() as f64;
        log::info!("epoch {}/{}: loss {:.4}", epoch + 1, opts.epochs, mean);
        report.epoch_losses.push(mean);
    }
    Ok((model, report))
}

struct OptimizerState<T> {
    kind: Optimizer,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: i32,
}

impl<T: Real> OptimizerState<T> {
    fn new(net: &Network<T>, kind: Optimizer) -> Self {
        let zeros: Vec<Vec<T>> = net.tensors().iter().map(|(_, _, t)| vec![T::zero(); t.len()]).collect();
        let second = match kind {
            Optimizer::Adam { .. } => zeros.clone(),
            Optimizer::Momentum { .. } => Vec::new(),
        };
        Self {
            kind,
            first: zeros,
            second,
            steps: 0,
        }
    }

    fn step(&mut self, net: &mut Network<T>, grads: Vec<&mut Vec<T>>, lr: f64, clip: f64) {
        self.steps += 1;
        let clip = T::lit(clip);
        match self.kind {
            Optimizer::Momentum { momentum } => {
                let (mu, lr) = (T::lit(momentum), T::lit(lr));
                for ((w, g), v) in net.tensors_mut().into_iter().zip(grads).zip(&mut self.first) {
                    for ((wi, &gi), vi) in w.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                        *vi = mu * *vi + gi * clip;
                        *wi -= lr * *vi;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let step_size = T::lit(lr * (1.0 - beta2.powi(self.steps)).sqrt() / (1.0 - beta1.powi(self.steps)));
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                let one = T::one();
                let tensors = net.tensors_mut().into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second);
                for (((w, g), m), v) in tensors {
                    for (((wi, &gi), mi), vi) in w.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let gi = gi * clip;
                        *mi = b1 * *mi + (one - b1) * gi;
                        *vi = b2 * *vi + (one - b2) * gi * gi;
                        *wi -= step_size * *mi / (vi.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asr::{FrontendConfig, Hyperparams, Vocab};
    use crate::datagen::{synth_utterance, ToneLanguageSpec};

    fn tiny_model(seed: u64) -> AsrModel<f32> {
        let hyper = Hyperparams {
            hidden: 32,
            seed,
            ..Hyperparams::default()
        };
        AsrModel::new(Vocab::default(), FrontendConfig::default(), hyper).unwrap()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let spec = ToneLanguageSpec::default();
        let utt = synth_utterance("u", "abc", &spec, 1).unwrap();
        let model = tiny_model(3);
        let (out, report) = train(&model, &[utt], 0, 0.01).unwrap();
        assert_eq!(out, model);
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = tiny_model(3);
        assert!(train(&model, &[], 1, 0.01).is_err());
        let utt = synth_utterance("u", "abc", &ToneLanguageSpec::default(), 1).unwrap();
        assert!(train(&model, std::slice::from_ref(&utt), 1, 0.0).is_err());
        assert!(train(&model, &[utt], 1, f64::NAN).is_err());
    }

    #[test]
    fn overfits_one_sample() {
        let spec = ToneLanguageSpec::default();
        let utt = synth_utterance("u", "bad cafe", &spec, 9).unwrap();
        let model = tiny_model(5);
        let (trained, report) = train(&model, std::slice::from_ref(&utt), 150, 0.05).unwrap();
        let losses = &report.epoch_losses;
        // after warmup the trace keeps going down
        let warm = 20;
        let late_rises = losses[warm..].windows(2).filter(|w| w[1] > w[0] * 1.001).count();
        assert!(late_rises <= losses.len() / 20, "{late_rises} rises in {losses:?}");
        assert!(losses.last().unwrap() < &(losses[0] * 0.05));
        assert_eq!(trained.predict(utt.audio()).unwrap(), "bad cafe");
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let spec = ToneLanguageSpec::default();
        let data: Vec<_> = ["abc", "dead", "face"]
            .iter()
            .enumerate()
            .map(|(i, t)| synth_utterance(&format!("u{i}"), t, &spec, i as u64).unwrap())
            .collect();
        let model = tiny_model(11);
        let a = train(&model, &data, 2, 0.02).unwrap();
        let b = train(&model, &data, 2, 0.02).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, model);
    }

    #[test]
    fn mask_survives_training() {
        let spec = ToneLanguageSpec::default();
        let utt = synth_utterance("u", "cab", &spec, 2).unwrap();
        let mut model = tiny_model(4);
        let zeroed: Vec<Vec<bool>> = model
            .network()
            .tensors()
            .iter()
            .map(|(_, info, t)| if info.fully_connected { (0..t.len()).map(|i| i % 2 == 0).collect() } else { vec![] })
            .collect();
        model.set_mask(crate::asr::WeightMask { zeroed }).unwrap();
        let (out, _) = train(&model, &[utt], 3, 0.05).unwrap();
        let mask = out.mask().unwrap();
        for (i, (_, _, t)) in out.network().tensors().iter().enumerate() {
            for (w, &z) in t.iter().zip(mask.tensor(i)) {
                if z {
                    assert_eq!(*w, 0.0);
                }
            }
        }
    }
}

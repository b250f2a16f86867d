//! Experiment configuration file.
//!
//! TOML with one table per stage. Every key is optional; unknown keys are
//! rejected. See `configs/default.toml` for the full grammar with defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use wmlab_core::asr::{FrontendConfig, Hyperparams, Optimizer};
use wmlab_core::audio::TriggerKey;
use wmlab_core::datagen::ToneLanguageSpec;
use wmlab_core::seed::derive_seed;
use wmlab_core::stego::{StegoConfig, StegoMessage};
use wmlab_core::watermark::WatermarkConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; `--out` wins over it and `WMLAB_OUT` is used when neither is set.
    pub out: Option<PathBuf>,
    pub datagen: DatagenSection,
    pub model: ModelSection,
    pub stego: StegoSection,
    pub watermark: WatermarkSection,
    pub attack: AttackSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenSection {
    pub utterances: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub alphabet: String,
    pub base_hz: f64,
    pub step_hz: f64,
    pub symbol_ms: f64,
    pub ramp_ms: f64,
    pub amplitude: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub bidirectional: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub optimizer: OptimizerName,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StegoSection {
    pub message_bits: usize,
    /// Fixed message as a bit string; drawn from the seed when absent.
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WatermarkSection {
    pub n: usize,
    /// Mixing ratios, one per group; spread over [0.3, 0.6] when absent.
    pub key: Option<Vec<f64>>,
    pub trigger_set_size: usize,
    pub wer_threshold: f64,
    pub cer_threshold: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerName,
    pub final_lr_fraction: f64,
    pub replay_clean: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    pub sparsity: f64,
    pub recovery_epochs: usize,
    pub finetune_epochs: usize,
    /// Leading share of the eval split the attacker trains on; the rest
    /// measures clean accuracy after the attack.
    pub attacker_share: f64,
    pub overwrite_trigger_set_size: usize,
    pub overwrite_replay_clean: usize,
    /// Stegos known to the label-detection wrapper.
    pub intercepted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Momentum,
    Adam,
}

impl OptimizerName {
    pub fn build(self) -> Optimizer {
        match self {
            OptimizerName::Momentum => Optimizer::momentum(),
            OptimizerName::Adam => Optimizer::adam(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Prune,
    Finetune,
    Overwrite,
    Evasion,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Prune => "prune",
            AttackKind::Finetune => "finetune",
            AttackKind::Overwrite => "overwrite",
            AttackKind::Evasion => "evasion",
        }
    }
}

impl Default for DatagenSection {
    fn default() -> Self {
        let t = ToneLanguageSpec::default();
        Self {
            utterances: 500,
            min_len: 24,
            max_len: 36,
            alphabet: t.alphabet,
            base_hz: t.base_hz,
            step_hz: t.step_hz,
            symbol_ms: t.symbol_ms,
            ramp_ms: t.ramp_ms,
            amplitude: t.amplitude,
            noise_std: t.noise_std,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let h = Hyperparams::default();
        Self {
            hidden: h.hidden,
            bidirectional: h.bidirectional,
            learning_rate: h.learning_rate,
            batch_size: h.batch_size,
            clip_norm: h.clip_norm,
            optimizer: OptimizerName::Momentum,
            epochs: 12,
        }
    }
}

impl Default for StegoSection {
    fn default() -> Self {
        Self {
            message_bits: wmlab_core::stego::DEFAULT_MESSAGE_BITS,
            message: None,
        }
    }
}

impl Default for WatermarkSection {
    fn default() -> Self {
        let w = WatermarkConfig::with_groups(4).expect("four groups are valid");
        Self {
            n: w.n,
            key: None,
            trigger_set_size: w.trigger_set_size,
            wer_threshold: w.wer_threshold,
            cer_threshold: w.cer_threshold,
            learning_rate: w.learning_rate,
            epochs: w.epochs,
            optimizer: OptimizerName::Adam,
            final_lr_fraction: w.final_lr_fraction,
            replay_clean: w.replay_clean,
        }
    }
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            kind: AttackKind::Prune,
            sparsity: 0.5,
            recovery_epochs: wmlab_core::attacks::PRUNE_RECOVERY_EPOCHS,
            finetune_epochs: 10,
            attacker_share: 0.8,
            overwrite_trigger_set_size: 40,
            overwrite_replay_clean: 40,
            intercepted: 2,
        }
    }
}

fn usage(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{key}: {msg}"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let CliError::Usage(m) = match Self::parse(&body) {
            Ok(cfg) => return Ok(cfg),
            Err(e) => e,
        };
        Err(CliError::Usage(format!("{}: {m}", path.display())))
    }

    pub fn parse(body: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(body).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Checks every field by building each stage's settings once.
    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.datagen;
        if d.utterances < 5 {
            return Err(usage("datagen.utterances", "need at least 5 utterances for a train/eval split"));
        }
        if d.min_len == 0 || d.max_len < d.min_len {
            return Err(usage("datagen.min_len", format!("bad length range {}..={}", d.min_len, d.max_len)));
        }
        self.tone_spec()
            .validate(&FrontendConfig::default())
            .map_err(|e| usage("datagen", e))?;
        if self.model.epochs == 0 {
            return Err(usage("model.epochs", "must be positive"));
        }
        self.hyperparams().validate().map_err(|e| usage("model", e))?;
        if let Some(bits) = &self.stego.message {
            let m = StegoMessage::from_bit_str(bits).map_err(|e| usage("stego.message", e))?;
            if m.len() != self.stego.message_bits {
                return Err(usage(
                    "stego.message",
                    format!("has {} bits but message_bits = {}", m.len(), self.stego.message_bits),
                ));
            }
        }
        if self.stego.message_bits == 0 {
            return Err(usage("stego.message_bits", "must be positive"));
        }
        let w = self.watermark_config().map_err(|e| usage("watermark", e))?;
        w.validate().map_err(|e| usage("watermark", e))?;
        let a = &self.attack;
        if !(0.0..1.0).contains(&a.sparsity) {
            return Err(usage("attack.sparsity", format!("{} must lie in [0, 1)", a.sparsity)));
        }
        if !(a.attacker_share > 0.0 && a.attacker_share < 1.0) {
            return Err(usage("attack.attacker_share", format!("{} must lie in (0, 1)", a.attacker_share)));
        }
        if a.overwrite_trigger_set_size < w.n {
            return Err(usage("attack.overwrite_trigger_set_size", format!("must be at least n = {}", w.n)));
        }
        if a.intercepted > w.n {
            return Err(usage("attack.intercepted", format!("cannot exceed n = {}", w.n)));
        }
        Ok(())
    }

    pub fn tone_spec(&self) -> ToneLanguageSpec {
        let d = &self.datagen;
        ToneLanguageSpec {
            alphabet: d.alphabet.clone(),
            base_hz: d.base_hz,
            step_hz: d.step_hz,
            symbol_ms: d.symbol_ms,
            ramp_ms: d.ramp_ms,
            amplitude: d.amplitude,
            noise_std: d.noise_std,
            seed: derive_seed(self.seed, "datagen"),
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        let m = &self.model;
        Hyperparams {
            hidden: m.hidden,
            bidirectional: m.bidirectional,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            clip_norm: m.clip_norm,
            optimizer: m.optimizer.build(),
            seed: derive_seed(self.seed, "model"),
        }
    }

    pub fn stego_config(&self) -> StegoConfig {
        StegoConfig {
            message_bits: self.stego.message_bits,
            ..StegoConfig::default()
        }
    }

    pub fn watermark_config(&self) -> wmlab_core::Result<WatermarkConfig> {
        let w = &self.watermark;
        let mut cfg = WatermarkConfig::with_groups(w.n)?;
        if let Some(k) = &w.key {
            cfg.key = TriggerKey::new(k.clone())?;
        }
        cfg.message_bits = self.stego.message_bits;
        cfg.trigger_set_size = w.trigger_set_size;
        cfg.wer_threshold = w.wer_threshold;
        cfg.cer_threshold = w.cer_threshold;
        cfg.learning_rate = w.learning_rate;
        cfg.epochs = w.epochs;
        cfg.optimizer = Some(w.optimizer.build());
        cfg.final_lr_fraction = w.final_lr_fraction;
        cfg.replay_clean = w.replay_clean;
        cfg.seed = derive_seed(self.seed, "watermark");
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("[watermark]\nnn = 3\n").unwrap_err();
        assert!(err.to_string().contains("nn"), "{err}");
    }

    #[test]
    fn bad_value_names_its_key() {
        let cfg = ExperimentConfig::parse("[attack]\nsparsity = 1.5\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("attack.sparsity"), "{err}");
        let cfg = ExperimentConfig::parse("[watermark]\nn = 2\nkey = [0.3]\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("watermark"));
    }

    #[test]
    fn shipped_configs_parse() {
        for name in ["default.toml", "full-scale.toml"] {
            let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
            ExperimentConfig::load(&path).unwrap().validate().unwrap();
        }
    }
}

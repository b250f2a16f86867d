use std::fmt;

use crate::stego::StegoMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Watermarked,
    NotWatermarked,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Watermarked => "watermarked",
            Verdict::NotWatermarked => "not-watermarked",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerPrediction {
    pub source_id: String,
    pub clip_index: usize,
    pub target: String,
    /// Normalized output of the queried model.
    pub predicted: String,
}

/// Rates of one trigger group against its own stego.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScore {
    pub clip_index: usize,
    pub triggers: usize,
    pub wer: f64,
    pub cer: f64,
    /// Both rates below threshold; only passing groups vote on the message.
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionReport {
    pub predictions: Vec<TriggerPrediction>,
    /// Corpus-level rates pooled over every trigger.
    pub wer: f64,
    pub cer: f64,
    pub wer_threshold: f64,
    pub cer_threshold: f64,
    pub groups: Vec<GroupScore>,
    /// Modal message over the passing groups; unset when none passes.
    pub recovered: Option<StegoMessage>,
    pub ber: Option<f64>,
    pub verdict: Verdict,
    pub rationale: String,
}

impl ExtractionReport {
    /// Watermarked with every message bit recovered.
    pub fn proves_ownership(&self) -> bool {
        self.verdict == Verdict::Watermarked && self.ber == Some(0.0)
    }

    /// `key=value` lines, each key prefixed with `prefix`.
    pub fn to_kv(&self, prefix: &str) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| out.push_str(&format!("{prefix}{k}={v}\n"));
        kv("verdict", &self.verdict);
        kv("wer", &format_args!("{:.6}", self.wer));
        kv("cer", &format_args!("{:.6}", self.cer));
        kv("wer_threshold", &self.wer_threshold);
        kv("cer_threshold", &self.cer_threshold);
        kv("triggers", &self.predictions.len());
        for g in &self.groups {
            let p = format!("group.{}.", g.clip_index);
            kv(&format!("{p}triggers"), &g.triggers);
            kv(&format!("{p}wer"), &format_args!("{:.6}", g.wer));
            kv(&format!("{p}cer"), &format_args!("{:.6}", g.cer));
            kv(&format!("{p}passes"), &g.passes);
        }
        match (&self.recovered, self.ber) {
            (Some(m), Some(b)) => {
                kv("recovered_message", m);
                kv("ber", &format_args!("{b:.3}"));
            }
            _ => {
                kv("recovered_message", &"none");
                kv("ber", &"none");
            }
        }
        kv("rationale", &self.rationale);
        for (i, p) in self.predictions.iter().enumerate() {
            kv(&format!("trigger.{i}.source"), &p.source_id);
            kv(&format!("trigger.{i}.clip_index"), &p.clip_index);
            kv(&format!("trigger.{i}.predicted"), &p.predicted);
        }
        out
    }
}

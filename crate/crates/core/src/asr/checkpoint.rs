//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic, version, vocabulary, frontend, hyperparameters,
//! network shape, every tensor as `f64` values in row-major order, optional
//! pruning mask, then a SHA-256 digest over all preceding bytes.

use std::path::Path;

use crate::asr::features::FrontendConfig;
use crate::asr::model::{AsrModel, Hyperparams, Optimizer, WeightMask};
use crate::asr::network::Network;
use crate::asr::vocab::Vocab;
use crate::binio::{hex, sha256, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"WMASRCK\0";
const VERSION: u32 = 1;

impl<T: Real> AsrModel<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);

        w.len_u32(self.vocab.len());
        for &c in self.vocab.chars() {
            w.u32(c as u32);
        }

        let f = &self.frontend;
        w.u32(f.sample_rate_hz);
        w.f64(f.frame_len_ms);
        w.f64(f.hop_ms);
        w.u64(f.n_fft as u64);
        w.u64(f.n_filters as u64);
        w.f64(f.f_min_hz);
        w.f64(f.f_max_hz);

        let h = &self.hyper;
        w.u64(h.hidden as u64);
        w.u8(h.bidirectional as u8);
        w.f64(h.learning_rate);
        w.u64(h.batch_size as u64);
        w.f64(h.clip_norm);
        match h.optimizer {
            Optimizer::Momentum { momentum } => {
                w.u8(0);
                w.f64(momentum);
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                w.u8(1);
                w.f64(beta1);
                w.f64(beta2);
                w.f64(eps);
            }
        }
        w.u64(h.seed);

        let tensors = self.net.tensors();
        w.len_u32(tensors.len());
        for (name, _, t) in &tensors {
            w.str(name);
            w.len_u32(t.len());
            for v in t.iter() {
                w.f64(v.as_f64());
            }
        }

        match &self.mask {
            None => w.u8(0),
            Some(mask) => {
                w.u8(1);
                for m in &mask.zeroed {
                    w.len_u32(m.len());
                    w.bytes(&m.iter().map(|&z| z as u8).collect::<Vec<_>>());
                }
            }
        }
        w.finish_with_digest()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::with_digest(data)?;
        r.expect(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }

        let n = r.len()?;
        let chars = (0..n)
            .map(|_| {
                let c = r.u32()?;
                char::from_u32(c).ok_or_else(|| Error::Format(format!("invalid vocabulary code point {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let vocab = Vocab::new(chars).map_err(|e| Error::Format(e.to_string()))?;

        let frontend = FrontendConfig {
            sample_rate_hz: r.u32()?,
            frame_len_ms: r.f64()?,
            hop_ms: r.f64()?,
            n_fft: r.u64()? as usize,
            n_filters: r.u64()? as usize,
            f_min_hz: r.f64()?,
            f_max_hz: r.f64()?,
        };
        let hidden = r.u64()? as usize;
        let bidirectional = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad direction flag {b}"))),
        };
        let learning_rate = r.f64()?;
        let batch_size = r.u64()? as usize;
        let clip_norm = r.f64()?;
        let optimizer = match r.u8()? {
            0 => Optimizer::Momentum { momentum: r.f64()? },
            1 => Optimizer::Adam {
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
            },
            b => return Err(Error::Format(format!("unknown optimizer tag {b}"))),
        };
        let hyper = Hyperparams {
            hidden,
            bidirectional,
            learning_rate,
            batch_size,
            clip_norm,
            optimizer,
            seed: r.u64()?,
        };
        frontend.validate().map_err(|e| Error::Format(e.to_string()))?;
        hyper.validate().map_err(|e| Error::Format(e.to_string()))?;

        let mut net: Network<T> = Network::new(frontend.n_filters, hidden, vocab.num_classes(), bidirectional, 0);
        let expected: Vec<(String, usize)> = net.tensors().into_iter().map(|(n, _, t)| (n, t.len())).collect();
        if r.len()? != expected.len() {
            return Err(Error::Format("tensor count does not match the declared shape".into()));
        }
        for (dst, (name, len)) in net.tensors_mut().into_iter().zip(&expected) {
            let got = r.str()?;
            if &got != name || r.len()? != *len {
                return Err(Error::Format(format!("tensor {got:?} does not match expected {name:?} [{len}]")));
            }
            for d in dst.iter_mut() {
                let v = r.f64()?;
                if !v.is_finite() {
                    return Err(Error::Format(format!("non-finite weight in {name}")));
                }
                *d = T::lit(v);
            }
        }

        let mask = match r.u8()? {
            0 => None,
            1 => {
                let mut zeroed = Vec::with_capacity(expected.len());
                for (name, len) in &expected {
                    let n = r.len()?;
                    if n != 0 && n != *len {
                        return Err(Error::Format(format!("mask for {name} has {n} entries, expected {len}")));
                    }
                    zeroed.push(r.take(n)?.iter().map(|&b| b != 0).collect());
                }
                Some(WeightMask { zeroed })
            }
            b => return Err(Error::Format(format!("bad mask flag {b}"))),
        };
        r.finish()?;
        Ok(AsrModel {
            vocab,
            frontend,
            hyper,
            net,
            mask,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn fingerprint(&self) -> String {
        hex(&sha256(&self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(bidirectional: bool) -> AsrModel<f64> {
        let hyper = Hyperparams {
            hidden: 6,
            bidirectional,
            optimizer: Optimizer::adam(),
            seed: 21,
            ..Hyperparams::default()
        };
        AsrModel::new(Vocab::default(), FrontendConfig::default(), hyper).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        for bi in [false, true] {
            let m = model(bi);
            assert_eq!(AsrModel::<f64>::from_bytes(&m.to_bytes()).unwrap(), m);
        }
    }

    #[test]
    fn roundtrip_with_mask_and_file() {
        let mut m = model(false);
        let zeroed = m
            .network()
            .tensors()
            .iter()
            .map(|(_, info, t)| if info.fully_connected { vec![true; t.len()] } else { vec![] })
            .collect();
        m.set_mask(WeightMask { zeroed }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        assert_eq!(AsrModel::<f64>::load(&path).unwrap(), m);
    }

    #[test]
    fn f32_models_survive_the_f64_format() {
        let m: AsrModel<f32> = model(true).cast();
        assert_eq!(AsrModel::<f32>::from_bytes(&m.to_bytes()).unwrap(), m);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = model(false).to_bytes();
        bytes[40] ^= 1;
        assert!(AsrModel::<f64>::from_bytes(&bytes).is_err());
        let bytes = model(false).to_bytes();
        assert!(AsrModel::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}

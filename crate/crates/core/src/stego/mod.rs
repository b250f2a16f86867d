//! Keyed word-bigram steganography for watermark target labels.
//!
//! A message is hidden by walking a bigram language model: at every step
//! the next word is chosen among the `2^r` most likely continuations of the
//! previous word, and its rank spells out the next `r` message bits. Each
//! stego starts from a different start word, picked by a seeded shuffle of
//! the model's start pool, so `n` stegos carrying the same message are
//! pairwise distinct. A fixed two-word sentinel closes every stego.
//!
//! Without the exact corpus statistics and seed an observer cannot
//! enumerate the stegos, and decoding under a different model almost
//! always fails.

mod corpus;
mod message;

pub use corpus::{corpus_sentences, tokenize_sentences, EMBEDDED_CORPUS};
pub use message::{read_stegos, write_stegos, StegoMessage, StegoText};

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{hex, sha256, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::metrics::pair_cer;

pub const DEFAULT_MESSAGE_BITS: usize = 20;
pub const DEFAULT_BITS_PER_STEP: u8 = 1;
/// Sentinel bigram appended after the final payload word.
pub const TERMINATOR: [&str; 2] = ["so", "on"];
pub const START_POOL_SIZE: usize = 64;

const MAGIC: &[u8; 8] = b"WMSTEGO\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StegoConfig {
    pub bits_per_step: u8,
    pub message_bits: usize,
}

impl Default for StegoConfig {
    fn default() -> Self {
        Self {
            bits_per_step: DEFAULT_BITS_PER_STEP,
            message_bits: DEFAULT_MESSAGE_BITS,
        }
    }
}

/// Ranked continuation list: `(word, count)` sorted by descending count,
/// ties by ascending word.
type Ranked = Vec<(String, u32)>;

fn rank(counts: HashMap<&str, u32>) -> Ranked {
    let mut v: Ranked = counts.into_iter().map(|(w, c)| (w.to_owned(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct StegoModel {
    config: StegoConfig,
    corpus_hash: [u8; 32],
    unigrams: Ranked,
    bigrams: BTreeMap<String, Ranked>,
    start_pool: Vec<String>,
}

/// Best-matching known stego for a noisy transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestMatch {
    pub message: StegoMessage,
    pub cer: f64,
    pub clip_index: usize,
}

impl StegoModel {
    /// Builds the model from the corpus shipped with the crate.
    pub fn embedded(config: StegoConfig) -> Result<Self> {
        Self::from_corpus(EMBEDDED_CORPUS, config)
    }

    pub fn from_corpus(text: &str, config: StegoConfig) -> Result<Self> {
        if config.bits_per_step == 0 || config.bits_per_step > 8 {
            return Err(Error::InvalidConfig(format!(
                "bits per step must be in 1..=8, got {}",
                config.bits_per_step
            )));
        }
        if config.message_bits == 0 {
            return Err(Error::InvalidConfig("message must have at least one bit".into()));
        }
        let sentences = tokenize_sentences(text);
        let mut uni: HashMap<&str, u32> = HashMap::new();
        let mut bi: HashMap<&str, HashMap<&str, u32>> = HashMap::new();
        for s in &sentences {
            for w in s {
                *uni.entry(w).or_default() += 1;
            }
            for pair in s.windows(2) {
                *bi.entry(&pair[0]).or_default().entry(&pair[1]).or_default() += 1;
            }
        }
        let width = 1usize << config.bits_per_step;
        if uni.len() < width {
            return Err(Error::InvalidConfig(format!(
                "corpus has {} distinct words, need at least {width}",
                uni.len()
            )));
        }
        let unigrams = rank(uni);
        let bigrams: BTreeMap<String, Ranked> = bi.into_iter().map(|(w, c)| (w.to_owned(), rank(c))).collect();
        let start_pool = unigrams
            .iter()
            .map(|(w, _)| w)
            .filter(|w| bigrams.get(*w).is_some_and(|c| c.len() >= width) && !TERMINATOR.contains(&w.as_str()))
            .take(START_POOL_SIZE)
            .cloned()
            .collect();
        Ok(Self {
            config,
            corpus_hash: sha256(text.as_bytes()),
            unigrams,
            bigrams,
            start_pool,
        })
    }

    pub fn config(&self) -> StegoConfig {
        self.config
    }

    pub fn corpus_hash_hex(&self) -> String {
        hex(&self.corpus_hash)
    }

    pub fn start_pool(&self) -> &[String] {
        &self.start_pool
    }

    fn width(&self) -> usize {
        1 << self.config.bits_per_step
    }

    fn steps(&self) -> usize {
        self.config.message_bits.div_ceil(self.config.bits_per_step as usize)
    }

    /// The `2^r` candidate words after `context`, backing off to the
    /// unigram ranking when the context is too sparse.
    pub fn candidates(&self, context: &str) -> Result<Vec<&str>> {
        let width = self.width();
        let ranked = match self.bigrams.get(context) {
            Some(c) if c.len() >= width => c,
            _ => &self.unigrams,
        };
        if ranked.len() < width {
            return Err(Error::Encoding(format!(
                "no {width} continuations available after {context:?}"
            )));
        }
        Ok(ranked[..width].iter().map(|(w, _)| w.as_str()).collect())
    }

    /// Start words for `n` stegos under `seed`, pairwise distinct.
    pub fn start_contexts(&self, n: usize, seed: u64) -> Result<Vec<&str>> {
        if n == 0 || n > self.start_pool.len() {
            return Err(Error::invalid(format!(
                "stego count must be in 1..={}, got {n}",
                self.start_pool.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.start_pool.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(order[..n].iter().map(|&i| self.start_pool[i].as_str()).collect())
    }

    fn encode_from(&self, message: &StegoMessage, start: &str) -> Result<Vec<String>> {
        let r = self.config.bits_per_step as usize;
        let bits = message.bits();
        let mut tokens = vec![start.to_owned()];
        for step in 0..self.steps() {
            let value = (0..r).fold(0usize, |acc, j| {
                (acc << 1) | usize::from(bits.get(step * r + j).copied().unwrap_or(false))
            });
            let next = self.candidates(tokens.last().unwrap())?[value].to_owned();
            tokens.push(next);
        }
        tokens.extend(TERMINATOR.iter().map(|w| w.to_string()));
        Ok(tokens)
    }

    /// Hides `message` in `n` distinct stego texts.
    pub fn encode_message(&self, message: &StegoMessage, n: usize, seed: u64) -> Result<Vec<StegoText>> {
        if message.len() != self.config.message_bits {
            return Err(Error::invalid(format!(
                "message has {} bits, model expects {}",
                message.len(),
                self.config.message_bits
            )));
        }
        self.start_contexts(n, seed)?
            .into_iter()
            .enumerate()
            .map(|(i, start)| StegoText::new(self.encode_from(message, start)?, i))
            .collect()
    }

    /// Recovers the message hidden in `text`, or reports why it cannot be a stego.
    pub fn decode_text(&self, text: &StegoText) -> Result<StegoMessage> {
        let tokens = text.tokens();
        let undecodable = |step, reason: String| Error::Undecodable { step, reason };
        if !self.start_pool.contains(&tokens[0]) {
            return Err(undecodable(0, format!("{:?} is not a start word", tokens[0])));
        }
        let r = self.config.bits_per_step as usize;
        let mut bits = Vec::with_capacity(self.steps() * r);
        for step in 1..=self.steps() {
            let word = tokens
                .get(step)
                .ok_or_else(|| undecodable(step, "text ends before the payload".into()))?;
            let rank = self
                .candidates(&tokens[step - 1])?
                .iter()
                .position(|c| c == word)
                .ok_or_else(|| undecodable(step, format!("{word:?} is not a ranked continuation")))?;
            bits.extend((0..r).rev().map(|j| (rank >> j) & 1 == 1));
        }
        let tail: Vec<&str> = tokens[self.steps() + 1..].iter().map(String::as_str).collect();
        if tail != TERMINATOR {
            return Err(undecodable(self.steps() + 1, "missing or extra terminator words".into()));
        }
        bits.truncate(self.config.message_bits);
        StegoMessage::new(bits)
    }

    /// Decodes the known stego closest (by CER) to a possibly noisy
    /// transcript. Ties go to the lowest clip index.
    pub fn nearest_stego_decode(&self, transcript: &str, known: &[StegoText]) -> Result<NearestMatch> {
        let (best, cer) = known
            .iter()
            .map(|s| (s, pair_cer(&s.text(), transcript)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.clip_index().cmp(&b.0.clip_index())))
            .ok_or_else(|| Error::invalid("no known stegos to match against"))?;
        Ok(NearestMatch {
            message: self.decode_text(best)?,
            cer,
            clip_index: best.clip_index(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u8(self.config.bits_per_step);
        w.len_u32(self.config.message_bits);
        w.bytes(&self.corpus_hash);
        for t in TERMINATOR {
            w.str(t);
        }
        w.len_u32(self.start_pool.len());
        for s in &self.start_pool {
            w.str(s);
        }
        let ranked = |w: &mut ByteWriter, list: &Ranked| {
            w.len_u32(list.len());
            for (word, count) in list {
                w.str(word);
                w.u32(*count);
            }
        };
        ranked(&mut w, &self.unigrams);
        w.len_u32(self.bigrams.len());
        for (ctx, list) in &self.bigrams {
            w.str(ctx);
            ranked(&mut w, list);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        r.expect(MAGIC)?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported stego model version {version}")));
        }
        let config = StegoConfig {
            bits_per_step: r.u8()?,
            message_bits: r.len()?,
        };
        let corpus_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        for t in TERMINATOR {
            if r.str()? != t {
                return Err(Error::Format("terminator mismatch".into()));
            }
        }
        let pool_len = r.len()?;
        let start_pool = (0..pool_len).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let ranked = |r: &mut ByteReader| -> Result<Ranked> {
            let n = r.len()?;
            (0..n).map(|_| Ok((r.str()?, r.u32()?))).collect()
        };
        let unigrams = ranked(&mut r)?;
        let n_ctx = r.len()?;
        let mut bigrams = BTreeMap::new();
        for _ in 0..n_ctx {
            let ctx = r.str()?;
            bigrams.insert(ctx, ranked(&mut r)?);
        }
        r.finish()?;
        Ok(Self {
            config,
            corpus_hash,
            unigrams,
            bigrams,
            start_pool,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

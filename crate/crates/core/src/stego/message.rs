use std::fmt;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::text::{is_transcript_char, normalize_transcript};

/// The owner's secret bit string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StegoMessage {
    bits: Vec<bool>,
}

impl StegoMessage {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("message must have at least one bit"));
        }
        Ok(Self { bits })
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        Self {
            bits: (0..len).map(|_| rng.random()).collect(),
        }
    }

    /// Parses a string of `0` and `1` characters.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!("bad bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl fmt::Display for StegoMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A stego sentence and the owner-clip group it labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StegoText {
    tokens: Vec<String>,
    clip_index: usize,
}

impl StegoText {
    pub fn new(tokens: Vec<String>, clip_index: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("stego text is empty"));
        }
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || !t.chars().all(is_transcript_char))
        {
            return Err(Error::invalid(format!("invalid stego token {bad:?}")));
        }
        Ok(Self { tokens, clip_index })
    }

    /// Normalizes `text` and splits it into word tokens.
    pub fn from_text(text: &str, clip_index: usize) -> Result<Self> {
        let norm = normalize_transcript(text);
        Self::new(norm.split(' ').filter(|w| !w.is_empty()).map(str::to_owned).collect(), clip_index)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn clip_index(&self) -> usize {
        self.clip_index
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for StegoText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Writes one stego per line, line `i` holding clip group `i`.
pub fn write_stegos(path: impl AsRef<Path>, stegos: &[StegoText]) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&StegoText> = stegos.iter().collect();
    sorted.sort_by_key(|s| s.clip_index());
    if sorted.iter().enumerate().any(|(i, s)| s.clip_index() != i) {
        return Err(Error::invalid("stego clip indices must be 0..n"));
    }
    let body: String = sorted.iter().map(|s| format!("{}\n", s.text())).collect();
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_stegos(path: impl AsRef<Path>) -> Result<Vec<StegoText>> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| StegoText::from_text(line, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_string_parsing() {
        let m = StegoMessage::from_bit_str("0110").unwrap();
        assert_eq!(m.bits(), &[false, true, true, false]);
        assert_eq!(m.to_string(), "0110");
        assert!(StegoMessage::from_bit_str("01x").is_err());
        assert!(StegoMessage::from_bit_str("").is_err());
    }

    #[test]
    fn stego_text_validation() {
        assert!(StegoText::new(vec![], 0).is_err());
        assert!(StegoText::new(vec!["Hello".into()], 0).is_err());
        let t = StegoText::from_text("  We  the People ", 2).unwrap();
        assert_eq!(t.text(), "we the people");
        assert_eq!(t.clip_index(), 2);
    }

    #[test]
    fn stego_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stegos.txt");
        let s = vec![
            StegoText::from_text("b c", 1).unwrap(),
            StegoText::from_text("a b", 0).unwrap(),
        ];
        write_stegos(&p, &s).unwrap();
        let back = read_stegos(&p).unwrap();
        assert_eq!(back[0].text(), "a b");
        assert_eq!(back[1], s[0]);
    }
}

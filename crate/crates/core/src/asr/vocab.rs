use crate::error::{Error, Result};
use crate::text::normalize_with;

/// Output alphabet. The CTC blank sits at index `len()`, after every character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
}

impl Default for Vocab {
    /// `a`–`z`, space, apostrophe.
    fn default() -> Self {
        let mut chars: Vec<char> = ('a'..='z').collect();
        chars.extend([' ', '\'']);
        Self { chars }
    }
}

impl Vocab {
    pub fn new(chars: Vec<char>) -> Result<Self> {
        if chars.is_empty() {
            return Err(Error::invalid("vocabulary is empty"));
        }
        let mut seen = chars.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != chars.len() {
            return Err(Error::invalid("vocabulary has duplicate characters"));
        }
        Ok(Self { chars })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn blank(&self) -> usize {
        self.chars.len()
    }

    /// Number of network output classes, blank included.
    pub fn num_classes(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.chars.iter().position(|&v| v == c)
    }

    pub fn char_at(&self, idx: usize) -> Option<char> {
        self.chars.get(idx).copied()
    }

    /// Lowercase, drop out-of-vocabulary characters, collapse whitespace.
    pub fn normalize(&self, text: &str) -> String {
        normalize_with(text, |c| c != ' ' && self.chars.contains(&c))
    }

    /// Normalizes and maps a transcript to label indices.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let norm = self.normalize(text);
        if norm.is_empty() {
            return Err(Error::invalid(format!("transcript {text:?} is empty after normalization")));
        }
        norm.chars()
            .map(|c| {
                self.index_of(c)
                    .ok_or_else(|| Error::invalid(format!("character {c:?} is not in the vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().filter_map(|&i| self.char_at(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let v = Vocab::default();
        assert_eq!(v.len(), 28);
        assert_eq!(v.blank(), 28);
        assert_eq!(v.num_classes(), 29);
        assert_eq!(v.index_of(' '), Some(26));
        assert_eq!(v.index_of('\''), Some(27));
    }

    #[test]
    fn encode_normalizes() {
        let v = Vocab::default();
        assert_eq!(v.decode(&v.encode(" It's  OK! ").unwrap()), "it's ok");
        assert!(v.encode("123").is_err());
        assert!(Vocab::new(vec!['a', 'a']).is_err());
    }

    #[test]
    fn space_less_vocab_still_splits_words() {
        let v = Vocab::new(vec!['a', 'b']).unwrap();
        assert_eq!(v.normalize("a c b"), "a b");
        assert!(v.encode("a b").is_err());
    }
}

//! The bundled text corpus and its tokenizer.
//!
//! `data/corpus.txt` holds the 1960–1970 State of the Union addresses,
//! works of the United States government and therefore in the public
//! domain (taken from the `@stdlib/datasets-sotu` package, PDDL/CC0).

pub const EMBEDDED_CORPUS: &str = include_str!("../../data/corpus.txt");

fn is_sentence_break(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ';' | ':' | '\n')
}

/// Splits text into sentences of lowercase `[a-z']` word tokens.
///
/// Hyphens, digits and other punctuation separate words; leading and
/// trailing apostrophes are stripped.
pub fn tokenize_sentences(text: &str) -> Vec<Vec<String>> {
    text.split(is_sentence_break)
        .map(|sentence| {
            sentence
                .split(|c: char| !(c.is_ascii_alphabetic() || c == '\''))
                .map(|w| w.trim_matches('\'').to_ascii_lowercase())
                .filter(|w| !w.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Corpus sentences with at least `min_words` words, joined by spaces.
pub fn corpus_sentences(min_words: usize) -> Vec<String> {
    tokenize_sentences(EMBEDDED_CORPUS)
        .into_iter()
        .filter(|s| s.len() >= min_words)
        .map(|s| s.join(" "))
        .collect()
}

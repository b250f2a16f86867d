//! Transcript normalization shared by training and scoring.

/// Characters a transcript may contain after normalization (besides space).
pub fn is_transcript_char(c: char) -> bool {
    c.is_ascii_lowercase() || c == '\''
}

/// Lowercases, drops characters outside `a-z`, apostrophe and whitespace,
/// and collapses runs of whitespace into single spaces.
pub fn normalize_transcript(text: &str) -> String {
    normalize_with(text, is_transcript_char)
}

/// Normalization against an arbitrary character set; whitespace always
/// separates words.
pub fn normalize_with(text: &str, keep: impl Fn(char) -> bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if keep(c) {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

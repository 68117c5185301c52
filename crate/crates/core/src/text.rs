//! Small text helpers shared by statistics, metrics and alignment.
//!
//! Two tokenizations are used across the crate:
//!
//! * [`word_tokens`]: plain whitespace splitting. Sequence formats and the
//!   fallback budget counter use this one.
//! * [`punct_tokens`]: whitespace splitting after punctuation has been
//!   detached from words, so `"ran."` becomes `["ran", "."]`. Corpus
//!   statistics, BLEU and span alignment use this one.

/// Collapses every whitespace run to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Whitespace-delimited tokens.
pub fn word_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

fn is_detachable(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
        )
}

/// Whitespace tokens after detaching every punctuation character into its own
/// token.
pub fn punct_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if is_detachable(c) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Number of [`punct_tokens`] in `text` without allocating the tokens.
pub fn punct_token_count(text: &str) -> usize {
    let mut count = 0;
    for word in text.split_whitespace() {
        let mut in_word = false;
        for c in word.chars() {
            if is_detachable(c) {
                count += 1;
                in_word = false;
            } else if !in_word {
                count += 1;
                in_word = true;
            }
        }
    }
    count
}

/// Lowercased [`punct_tokens`], the metric tokenization.
pub fn metric_tokens(text: &str) -> Vec<String> {
    punct_tokens(&text.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_whitespace_runs() {
        assert_eq!(normalize_whitespace("  a \n\t b  c "), "a b c");
        assert_eq!(normalize_whitespace("   "), "");
    }

    #[test]
    fn detaches_punctuation() {
        assert_eq!(punct_tokens("what is a?"), vec!["what", "is", "a", "?"]);
        assert_eq!(punct_tokens("don't."), vec!["don", "'", "t", "."]);
        assert_eq!(punct_token_count("don't."), 4);
        assert_eq!(punct_token_count("what is a ?"), 4);
    }

    #[test]
    fn metric_tokens_are_lowercase() {
        assert_eq!(metric_tokens("The Cat."), vec!["the", "cat", "."]);
    }
}

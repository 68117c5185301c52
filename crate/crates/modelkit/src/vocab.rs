//! Word-level vocabulary with a character-piece fallback.
//!
//! Known words map to one id. Any other word is spelled out as its first
//! character followed by `##`-prefixed continuation characters, so every
//! text built from characters seen at construction time round-trips.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use skillforge_core::backend::TokenId;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const CONTINUATION: &str = "##";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Order: `<pad>`, `<unk>`, `atomic` tokens, words by descending count
    /// then lexicographically, then character pieces. `spelled` tokens are
    /// not added as words but their characters get pieces.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, atomic: &[&str], spelled: &[&str]) -> Vocab {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut chars: BTreeSet<char> = BTreeSet::new();
        for text in texts {
            for word in text.split_whitespace() {
                *counts.entry(word).or_insert(0) += 1;
                chars.extend(word.chars());
            }
        }
        for t in atomic.iter().chain(spelled) {
            chars.extend(t.chars());
        }
        let mut words: Vec<(&str, usize)> = counts.into_iter().filter(|(w, _)| !spelled.contains(w)).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = vec![PAD.into(), UNK.into()];
        tokens.extend(atomic.iter().map(|s| s.to_string()));
        tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));
        for c in chars {
            tokens.push(c.to_string());
            tokens.push(format!("{CONTINUATION}{c}"));
        }
        Vocab::from_tokens(tokens)
    }

    /// Keeps the first occurrence of each token.
    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let mut vocab = Vocab {
            tokens: Vec::with_capacity(tokens.len()),
            index: HashMap::new(),
        };
        for t in tokens {
            vocab.push(t);
        }
        vocab
    }

    /// Appends `token` if new; returns its id.
    pub fn push(&mut self, token: String) -> TokenId {
        if let Some(&id) = self.index.get(&token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn pad_id(&self) -> TokenId {
        self.id(PAD).expect("vocabulary has <pad>")
    }

    pub fn unk_id(&self) -> TokenId {
        self.id(UNK).expect("vocabulary has <unk>")
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let unk = self.unk_id();
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            if let Some(id) = self.id(word) {
                ids.push(id);
                continue;
            }
            let mut buf = String::new();
            for (i, c) in word.chars().enumerate() {
                buf.clear();
                if i > 0 {
                    buf.push_str(CONTINUATION);
                }
                buf.push(c);
                ids.push(self.id(&buf).unwrap_or(unk));
            }
        }
        ids
    }

    /// Inverse of [`Vocab::encode`]; `<pad>` is skipped and unknown ids
    /// render as `<unk>`.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            let token = self.token(id).unwrap_or(UNK);
            if token == PAD {
                continue;
            }
            match token.strip_prefix(CONTINUATION) {
                Some(rest) if !rest.is_empty() && !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(token);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_then_pieces() {
        let v = Vocab::build(["the fox the"], &["</s>"], &["<FL>"]);
        assert_eq!(&v.tokens()[..4], &["<pad>", "<unk>", "</s>", "the"]);
        let ids = v.encode("<FL> the ox </s>");
        assert_eq!(ids.len(), 8);
        assert_eq!(v.decode(&ids), "<FL> the ox </s>");
    }

    #[test]
    fn unseen_characters_become_unk() {
        let v = Vocab::build(["ab"], &[], &[]);
        assert_eq!(v.decode(&v.encode("az")), "a <unk>");
    }
}

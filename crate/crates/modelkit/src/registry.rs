//! Backend selection by name. `SKILLFORGE_BACKEND` picks the plug-in;
//! `tiny` is the default and the only one built in.

use skillforge_core::backend::{BackendError, Seq2SeqBackend};
use skillforge_core::seqformat::SpecialTokens;

use crate::tiny::{self, TinyBackend, TinyConfig};
use crate::vocab::Vocab;

pub const BACKEND_ENV: &str = "SKILLFORGE_BACKEND";

pub fn available_backends() -> &'static [&'static str] {
    &[tiny::KIND]
}

/// Name from the environment, or `tiny`.
pub fn backend_name_from_env() -> String {
    std::env::var(BACKEND_ENV)
        .ok()
        .filter(|s| !s.trim().is_empty())
        .unwrap_or_else(|| tiny::KIND.to_string())
}

fn unknown(name: &str) -> BackendError {
    BackendError::Other(format!(
        "unknown backend {name:?}; available: {}",
        available_backends().join(", ")
    ))
}

/// Vocabulary for the tiny backend over `texts`. With atomic special tokens
/// every reserved token gets its own id; otherwise only end-of-sequence does
/// and the rest are spelled out.
pub fn tiny_vocab<'a>(texts: impl IntoIterator<Item = &'a str>, tokens: &SpecialTokens, atomic: bool) -> Vocab {
    let all = tokens.all();
    if atomic {
        Vocab::build(texts, &all, &[])
    } else {
        let spelled: Vec<&str> = all.iter().copied().filter(|t| *t != tokens.eos).collect();
        Vocab::build(texts, &[tokens.eos.as_str()], &spelled)
    }
}

/// A fresh, untrained backend whose vocabulary covers `texts`.
pub fn create_backend<'a>(
    name: &str,
    texts: impl IntoIterator<Item = &'a str>,
    tokens: &SpecialTokens,
    config: &TinyConfig,
) -> Result<Box<dyn Seq2SeqBackend>, BackendError> {
    match name {
        tiny::KIND => {
            let vocab = tiny_vocab(texts, tokens, config.atomic_special_tokens);
            let mut backend = TinyBackend::new(config.clone(), vocab, &tokens.eos)?;
            backend.register_special_tokens(&tokens.all())?;
            Ok(Box::new(backend))
        }
        other => Err(unknown(other)),
    }
}

/// Rebuilds a backend from a snapshot written by [`Seq2SeqBackend::snapshot`].
pub fn load_backend(name: &str, snapshot: &[u8]) -> Result<Box<dyn Seq2SeqBackend>, BackendError> {
    match name {
        tiny::KIND => Ok(Box::new(TinyBackend::from_snapshot(snapshot)?)),
        other => Err(unknown(other)),
    }
}

//! Capability interface every sequence-to-sequence backend implements.
//!
//! Training, decoding and evaluation only talk to models through this trait,
//! so the tiny reference backend and a pretrained adapter are
//! interchangeable.

use thiserror::Error;

use crate::seqformat::TokenCounter;

pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("non-finite loss encountered")]
    NonFinite,
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
    #[error("token id {0} is outside the vocabulary")]
    UnknownTokenId(TokenId),
    #[error("{0}")]
    Other(String),
}

/// Token ids of one encoder input and its decoder target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdPair {
    pub encoder: Vec<TokenId>,
    pub decoder: Vec<TokenId>,
}

/// Summed negative log-likelihood over a number of target tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    pub nll_sum: f64,
    pub tokens: usize,
}

impl LossStats {
    /// Mean per-token negative log-likelihood.
    pub fn mean(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.nll_sum / self.tokens as f64
        }
    }

    pub fn merge(self, other: LossStats) -> LossStats {
        LossStats {
            nll_sum: self.nll_sum + other.nll_sum,
            tokens: self.tokens + other.tokens,
        }
    }
}

pub trait Seq2SeqBackend: Send + Sync {
    /// Plug-in name, recorded in checkpoints.
    fn kind(&self) -> &'static str;

    fn vocab_size(&self) -> usize;

    fn tokenize(&self, text: &str) -> Vec<TokenId>;

    fn detokenize(&self, ids: &[TokenId]) -> String;

    fn token_id(&self, token: &str) -> Option<TokenId>;

    fn eos_id(&self) -> TokenId;

    /// Makes each token a single vocabulary entry (when the backend's
    /// configuration registers special tokens atomically).
    fn register_special_tokens(&mut self, tokens: &[&str]) -> Result<(), BackendError>;

    /// Loss without touching gradients.
    fn loss(&self, batch: &[IdPair]) -> Result<LossStats, BackendError>;

    /// Forward and backward pass; gradients of the summed NLL accumulate
    /// until the next [`apply_gradient_step`](Self::apply_gradient_step).
    fn accumulate_gradients(&mut self, batch: &[IdPair]) -> Result<LossStats, BackendError>;

    /// One optimizer step on the mean per-token loss of everything
    /// accumulated since the previous step.
    fn apply_gradient_step(&mut self, learning_rate: f64) -> Result<(), BackendError>;

    fn reset_optimizer(&mut self);

    /// Probability of every vocabulary entry as the next decoder token.
    fn next_token_distribution(
        &self,
        encoder: &[TokenId],
        decoder_prefix: &[TokenId],
    ) -> Result<Vec<f64>, BackendError>;

    /// Serialized parameters; also the checkpoint encoding.
    fn snapshot(&self) -> Vec<u8>;

    fn restore(&mut self, snapshot: &[u8]) -> Result<(), BackendError>;
}

/// Adapts any backend's tokenizer to length budgeting.
pub struct BackendCounter<'a>(pub &'a dyn Seq2SeqBackend);

impl TokenCounter for BackendCounter<'_> {
    fn count_tokens(&self, text: &str) -> usize {
        self.0.tokenize(text).len()
    }
}

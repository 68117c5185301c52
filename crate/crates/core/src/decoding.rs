//! Nucleus (top-p) sampling over any [`Seq2SeqBackend`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Seq2SeqBackend, TokenId};

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DecodingError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("backend failed at step {step}: {source}")]
    Backend {
        step: usize,
        #[source]
        source: BackendError,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub top_p: f64,
    pub seed: u64,
    pub max_new_tokens: usize,
    /// Overrides the backend's end-of-sequence id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos_id: Option<TokenId>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            top_p: 0.9,
            seed: 13,
            max_new_tokens: 128,
            eos_id: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), DecodingError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(DecodingError::InvalidConfig(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(DecodingError::InvalidConfig("max_new_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Truncated, renormalized distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct NucleusFiltered {
    /// Full-length vector; zero outside the nucleus, sums to one.
    pub probs: Vec<f64>,
    /// Kept token ids by descending probability (ties by ascending id).
    pub kept: Vec<usize>,
}

/// Keeps the smallest highest-probability prefix whose mass reaches `p`.
///
/// Tokens are ordered by descending probability, ties by ascending id. The
/// prefix stops at the first position where cumulative mass is `>= p`, so
/// `p = 1.0` keeps every token.
pub fn nucleus_filter(dist: &[f64], p: f64) -> Result<NucleusFiltered, DecodingError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(DecodingError::InvalidConfig(format!("top_p {p} outside (0, 1]")));
    }
    if dist.is_empty() {
        return Err(DecodingError::InvalidDistribution("empty".into()));
    }
    if let Some(bad) = dist.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(DecodingError::InvalidDistribution(format!("entry {bad}")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(DecodingError::InvalidDistribution(format!("sums to {total}")));
    }
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));

    let mut cumulative = 0.0;
    let mut cut = order.len();
    for (i, &id) in order.iter().enumerate() {
        cumulative += dist[id];
        if cumulative >= p {
            cut = i + 1;
            break;
        }
    }
    let kept: Vec<usize> = order[..cut].to_vec();
    let mass: f64 = kept.iter().map(|&i| dist[i]).sum();
    let mut probs = vec![0.0; dist.len()];
    for &i in &kept {
        probs[i] = dist[i] / mass;
    }
    Ok(NucleusFiltered { probs, kept })
}

/// Draws one token from a filtered distribution.
pub fn sample_from<R: Rng>(filtered: &NucleusFiltered, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &id in &filtered.kept {
        acc += filtered.probs[id];
        if u < acc {
            return id;
        }
    }
    // Rounding left the cumulative sum a hair below one.
    *filtered.kept.last().unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminatedBy {
    Eos,
    MaxLen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Generated ids, including the final eos when there is one.
    pub token_ids: Vec<TokenId>,
    /// Decoded text without the final eos.
    pub text: String,
    /// Decoded text of every generated id, eos included.
    pub raw_text: String,
    pub nucleus_sizes: Vec<usize>,
    pub terminated_by: TerminatedBy,
}

pub fn generate(
    backend: &dyn Seq2SeqBackend,
    encoder_text: &str,
    config: &SamplerConfig,
) -> Result<GenerationResult, DecodingError> {
    let encoder = backend.tokenize(encoder_text);
    generate_from_ids(backend, &encoder, config)
}

pub fn generate_from_ids(
    backend: &dyn Seq2SeqBackend,
    encoder: &[TokenId],
    config: &SamplerConfig,
) -> Result<GenerationResult, DecodingError> {
    config.validate()?;
    let eos = config.eos_id.unwrap_or_else(|| backend.eos_id());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ids: Vec<TokenId> = Vec::new();
    let mut sizes = Vec::new();
    let mut terminated_by = TerminatedBy::MaxLen;
    for step in 0..config.max_new_tokens {
        let dist = backend
            .next_token_distribution(encoder, &ids)
            .map_err(|source| DecodingError::Backend { step, source })?;
        let filtered = nucleus_filter(&dist, config.top_p)?;
        sizes.push(filtered.kept.len());
        let next = sample_from(&filtered, &mut rng) as TokenId;
        ids.push(next);
        if next == eos {
            terminated_by = TerminatedBy::Eos;
            break;
        }
    }
    let body = match terminated_by {
        TerminatedBy::Eos => &ids[..ids.len() - 1],
        TerminatedBy::MaxLen => &ids[..],
    };
    Ok(GenerationResult {
        text: backend.detokenize(body),
        raw_text: backend.detokenize(&ids),
        token_ids: ids,
        nucleus_sizes: sizes,
        terminated_by,
    })
}

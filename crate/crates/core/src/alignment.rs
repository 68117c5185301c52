//! Answer-span retrieval: find the passage window whose embedding is closest
//! (by cosine) to a free-text answer.
//!
//! Passages are split with [`punct_tokens`]; offsets are token offsets into
//! that sequence, `end` exclusive.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SkillDataset;
use crate::text::{metric_tokens, punct_tokens};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("passage is empty")]
    EmptyPassage,
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("invalid span bounds: {0}")]
    InvalidBounds(String),
    #[error("embedder failed: {0}")]
    Embedder(String),
    #[error("answer embedding is the zero vector")]
    DegenerateAnswer,
    #[error("no candidate span could be scored")]
    NoCandidates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanCandidate {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub score: f64,
}

impl SpanCandidate {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Text → fixed-dimension vector. Must be deterministic per text.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>, AlignError>;
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hashed bag of word and character-trigram features over metric tokens.
#[derive(Clone, Copy, Debug)]
pub struct HashedSubwordEmbedder {
    pub dim: usize,
}

impl Default for HashedSubwordEmbedder {
    fn default() -> Self {
        HashedSubwordEmbedder { dim: 512 }
    }
}

impl EmbeddingProvider for HashedSubwordEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, AlignError> {
        if self.dim == 0 {
            return Err(AlignError::Embedder("dimension is zero".into()));
        }
        let mut v = vec![0.0; self.dim];
        for token in metric_tokens(text) {
            let mut word = Vec::with_capacity(token.len() + 2);
            word.push(b'w');
            word.extend_from_slice(token.as_bytes());
            v[(fnv1a(&word) % self.dim as u64) as usize] += 1.0;
            let padded: Vec<char> = format!("<{token}>").chars().collect();
            for gram in padded.windows(3) {
                let s: String = gram.iter().collect();
                v[(fnv1a(s.as_bytes()) % self.dim as u64) as usize] += 0.5;
            }
        }
        Ok(v)
    }
}

/// Window-length limits. `max_len = None` means `min(answer length + 5, 20)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanBounds {
    pub min_len: usize,
    pub max_len: Option<usize>,
}

impl Default for SpanBounds {
    fn default() -> Self {
        SpanBounds {
            min_len: 1,
            max_len: None,
        }
    }
}

impl SpanBounds {
    pub fn resolve(&self, answer_len: usize) -> Result<(usize, usize), AlignError> {
        if self.min_len == 0 {
            return Err(AlignError::InvalidBounds("min_len must be at least 1".into()));
        }
        let max = match self.max_len {
            Some(m) => m,
            None => (answer_len + 5).min(20).max(self.min_len),
        };
        if max < self.min_len {
            return Err(AlignError::InvalidBounds(format!(
                "max_len {max} is below min_len {}",
                self.min_len
            )));
        }
        Ok((self.min_len, max))
    }
}

/// Every contiguous window of `passage` tokens with length in
/// `[min_len, max_len]`, ordered by start then length. Scores are zero.
pub fn enumerate_spans(passage: &str, min_len: usize, max_len: usize) -> Result<Vec<SpanCandidate>, AlignError> {
    let tokens = punct_tokens(passage);
    enumerate_token_spans(&tokens, min_len, max_len)
}

fn enumerate_token_spans(tokens: &[String], min_len: usize, max_len: usize) -> Result<Vec<SpanCandidate>, AlignError> {
    if tokens.is_empty() {
        return Err(AlignError::EmptyPassage);
    }
    if min_len == 0 || max_len < min_len {
        return Err(AlignError::InvalidBounds(format!("[{min_len}, {max_len}]")));
    }
    let n = tokens.len();
    let mut spans = Vec::new();
    for start in 0..n {
        for len in min_len..=max_len.min(n - start) {
            spans.push(SpanCandidate {
                start,
                end: start + len,
                text: tokens[start..start + len].join(" "),
                score: 0.0,
            });
        }
    }
    Ok(spans)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Scores closer than this are ties.
pub const TIE_EPSILON: f64 = 1e-12;

/// Highest-cosine window. Ties go to the earliest start, then the shortest
/// window.
pub fn align_answer(
    passage: &str,
    answer: &str,
    embedder: &dyn EmbeddingProvider,
    bounds: SpanBounds,
) -> Result<SpanCandidate, AlignError> {
    let answer_tokens = punct_tokens(answer);
    if answer_tokens.is_empty() {
        return Err(AlignError::EmptyAnswer);
    }
    let (min_len, max_len) = bounds.resolve(answer_tokens.len())?;
    let target = embedder.embed(&answer_tokens.join(" "))?;
    if cosine(&target, &target).is_none() {
        return Err(AlignError::DegenerateAnswer);
    }
    let mut best: Option<SpanCandidate> = None;
    for mut cand in enumerate_spans(passage, min_len, max_len)? {
        let v = embedder.embed(&cand.text)?;
        cand.score = match cosine(&target, &v) {
            Some(c) => c,
            None => {
                warn!("zero embedding for span {:?}", cand.text);
                f64::NEG_INFINITY
            }
        };
        if cand.score.is_finite() && best.as_ref().map_or(true, |b| cand.score > b.score + TIE_EPSILON) {
            best = Some(cand);
        }
    }
    best.ok_or(AlignError::NoCandidates)
}

/// First window whose lowercased tokens equal the answer's.
pub fn exact_span(passage: &str, answer: &str) -> Option<SpanCandidate> {
    let p = punct_tokens(passage);
    let p_low: Vec<String> = p.iter().map(|t| t.to_lowercase()).collect();
    let a = metric_tokens(answer);
    if a.is_empty() || a.len() > p.len() {
        return None;
    }
    (0..=p.len() - a.len())
        .find(|&s| p_low[s..s + a.len()] == a[..])
        .map(|start| SpanCandidate {
            start,
            end: start + a.len(),
            text: p[start..start + a.len()].join(" "),
            score: 1.0,
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    Exact,
    Aligned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub mode: AlignMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub story_id: String,
    pub pair_id: String,
    pub span: Option<SpanAnnotation>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct AlignedCorpus {
    pub dataset: SkillDataset,
    /// One record per pair, in corpus order.
    pub records: Vec<AlignmentRecord>,
}

impl AlignedCorpus {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.span.is_none()).count()
    }

    /// The corpus JSONL with a `span` object added to every aligned pair.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut records = self.records.iter();
        for story in &self.dataset.stories {
            let mut value = serde_json::to_value(story)?;
            let pairs = value["pairs"].as_array_mut().expect("pairs array");
            for pair in pairs {
                let rec = records.next().expect("one record per pair");
                if let Some(span) = &rec.span {
                    pair["span"] = serde_json::to_value(span)?;
                }
            }
            serde_json::to_writer(&mut out, &value)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Annotates every pair: exact search first, embedding alignment when the
/// answer is not verbatim in the story.
pub fn align_corpus(dataset: &SkillDataset, embedder: &dyn EmbeddingProvider, bounds: SpanBounds) -> AlignedCorpus {
    let jobs: Vec<_> = dataset.pairs().collect();
    let records = jobs
        .par_iter()
        .map(|(story, pair)| {
            let result = match exact_span(&story.text, &pair.answer) {
                Some(c) => Ok((c, AlignMode::Exact)),
                None => align_answer(&story.text, &pair.answer, embedder, bounds).map(|c| (c, AlignMode::Aligned)),
            };
            let (span, error) = match result {
                Ok((c, mode)) => (
                    Some(SpanAnnotation {
                        start: c.start,
                        end: c.end,
                        score: c.score,
                        mode,
                    }),
                    None,
                ),
                Err(e) => {
                    warn!("alignment failed for {}/{}: {e}", story.id, pair.id);
                    (None, Some(e.to_string()))
                }
            };
            AlignmentRecord {
                story_id: story.id.clone(),
                pair_id: pair.id.clone(),
                span,
                error,
            }
        })
        .collect();
    AlignedCorpus {
        dataset: dataset.clone(),
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_tokens_give_six_spans() {
        assert_eq!(enumerate_spans("a b c", 1, 3).unwrap().len(), 6);
        assert_eq!(enumerate_spans("a b c", 3, 3).unwrap().len(), 1);
        assert_eq!(enumerate_spans("", 1, 3), Err(AlignError::EmptyPassage));
    }

    #[test]
    fn verbatim_answer_wins_with_cosine_one() {
        let e = HashedSubwordEmbedder::default();
        let c = align_answer("The fox ran into the dark forest.", "dark forest", &e, SpanBounds::default()).unwrap();
        assert_eq!((c.start, c.end), (5, 7));
        assert!((c.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_earliest_start() {
        let e = HashedSubwordEmbedder::default();
        let c = align_answer("x y z red box a red box", "red box", &e, SpanBounds::default()).unwrap();
        assert_eq!(c.start, 3);
    }

    #[test]
    fn default_bounds_cap_at_twenty() {
        assert_eq!(SpanBounds::default().resolve(2).unwrap(), (1, 7));
        assert_eq!(SpanBounds::default().resolve(30).unwrap(), (1, 20));
    }
}

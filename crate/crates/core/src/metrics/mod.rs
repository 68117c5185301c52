//! Scoring of generated questions against references.

mod bleu;
mod breakdown;
mod humaneval;
mod semantic;
mod skill_control;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{QuestionType, Skill};

pub use bleu::{bleu, corpus_stats, BleuStats, SMOOTHING_EPSILON};
pub use breakdown::{breakdown, Breakdown, Dimension};
pub use humaneval::{
    export_human_eval_packet, import_human_eval, read_packet_key, write_packet, HumanEvalSample,
    ImportOutcome, ModelRatings, PacketKey, PacketRow, RowError,
};
pub use semantic::{
    proxy_token_f1, resolve_scorer, semantic_score, ExternalCommandScorer, ProxyTokenF1, ScorerSpec,
    SemanticResult, SemanticScorer,
};
pub use skill_control::{skill_control_scores, PrfScores, SkillControlReport, SkillJudgment};

/// Identifier of the metric tokenization, pinned in every report.
pub const TOKENIZER_ID: &str = "lowercase+punct-detached-whitespace";
/// Identifier of the BLEU smoothing, pinned in every report.
pub const SMOOTHING_ID: &str = "add-epsilon-1e-9";

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("nothing to score")]
    Empty,
    #[error("{0}")]
    Invalid(String),
    #[error("semantic scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("semantic scorer failed: {0}")]
    ScorerFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub hypothesis: String,
    pub references: Vec<String>,
    #[serde(default)]
    pub story_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<Skill>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<QuestionType>,
}

impl ScoredPair {
    pub fn new(hypothesis: impl Into<String>, references: Vec<String>) -> Self {
        ScoredPair {
            hypothesis: hypothesis.into(),
            references,
            story_id: String::new(),
            skill: None,
            qtype: None,
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.references.is_empty() {
            return Err(MetricError::Invalid(format!(
                "pair for story {:?} has no reference",
                self.story_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_score: Option<f64>,
    pub n: usize,
    /// Dimension name → group name → report.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub breakdowns: BTreeMap<String, BTreeMap<String, MetricReport>>,
}

impl MetricReport {
    /// BLEU over `pairs` plus the mean of their per-pair semantic scores.
    pub fn score(pairs: &[ScoredPair], semantic: Option<&[f64]>) -> Result<MetricReport, MetricError> {
        let b = bleu(pairs, 4)?;
        let semantic_score = semantic.map(|s| 100.0 * s.iter().sum::<f64>() / s.len() as f64);
        Ok(MetricReport {
            bleu_1: b[0],
            bleu_2: b[1],
            bleu_3: b[2],
            bleu_4: b[3],
            semantic_score,
            n: pairs.len(),
            breakdowns: BTreeMap::new(),
        })
    }

    pub fn bleu(&self) -> [f64; 4] {
        [self.bleu_1, self.bleu_2, self.bleu_3, self.bleu_4]
    }
}

/// Corpus report with question-type and skill breakdowns.
pub fn evaluate(
    pairs: &[ScoredPair],
    semantic: Option<&SemanticResult>,
) -> Result<(MetricReport, BTreeMap<String, usize>), MetricError> {
    let per_pair = semantic.map(|s| s.per_pair.as_slice());
    let mut report = MetricReport::score(pairs, per_pair)?;
    let mut excluded = BTreeMap::new();
    for dim in [Dimension::QuestionType, Dimension::Skill] {
        let b = breakdown(pairs, per_pair, dim)?;
        excluded.insert(dim.as_str().to_string(), b.excluded);
        report.breakdowns.insert(dim.as_str().to_string(), b.groups);
    }
    Ok((report, excluded))
}

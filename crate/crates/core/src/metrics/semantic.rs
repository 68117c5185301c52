//! Pluggable semantic similarity scoring.
//!
//! A learned metric runs out of process through [`ExternalCommandScorer`].
//! Where none is configured, [`ProxyTokenF1`] can stand in; reports label it
//! as a proxy so its numbers are never mistaken for the learned metric.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{MetricError, ScoredPair};
use crate::text::metric_tokens;

pub const PROXY_NAME: &str = "proxy-token-f1";

pub trait SemanticScorer {
    fn name(&self) -> String;

    fn is_proxy(&self) -> bool;

    /// One score per item, each in roughly [0, 1]. Items are
    /// `(hypothesis, references)`.
    fn score_batch(&mut self, items: &[(&str, &[String])]) -> Result<Vec<f64>, MetricError>;
}

/// Unigram-overlap F-measure between a hypothesis and a reference, on metric
/// tokens.
pub fn proxy_token_f1(hypothesis: &str, reference: &str) -> f64 {
    let hyp = metric_tokens(hypothesis);
    let reference = metric_tokens(reference);
    if hyp.is_empty() || reference.is_empty() {
        return if hyp.is_empty() && reference.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &reference {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in &hyp {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / hyp.len() as f64;
    let recall = overlap as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Max over references of [`proxy_token_f1`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ProxyTokenF1;

impl SemanticScorer for ProxyTokenF1 {
    fn name(&self) -> String {
        PROXY_NAME.to_string()
    }

    fn is_proxy(&self) -> bool {
        true
    }

    fn score_batch(&mut self, items: &[(&str, &[String])]) -> Result<Vec<f64>, MetricError> {
        Ok(items
            .iter()
            .map(|(h, refs)| {
                refs.iter()
                    .map(|r| proxy_token_f1(h, r))
                    .fold(0.0, f64::max)
            })
            .collect())
    }
}

/// Runs `command --checkpoint <checkpoint>`, writes one JSON object
/// `{"candidate": .., "references": [..]}` per line to its stdin and reads
/// one score per line from its stdout.
#[derive(Clone, Debug)]
pub struct ExternalCommandScorer {
    pub name: String,
    pub command: PathBuf,
    pub checkpoint: PathBuf,
}

#[derive(Serialize)]
struct ExternalItem<'a> {
    candidate: &'a str,
    references: &'a [String],
}

impl SemanticScorer for ExternalCommandScorer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn is_proxy(&self) -> bool {
        false
    }

    fn score_batch(&mut self, items: &[(&str, &[String])]) -> Result<Vec<f64>, MetricError> {
        let mut child = Command::new(&self.command)
            .arg("--checkpoint")
            .arg(&self.checkpoint)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| MetricError::ScorerUnavailable(format!("{}: {e}", self.command.display())))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            let mut payload = Vec::new();
            for (candidate, references) in items {
                serde_json::to_writer(&mut payload, &ExternalItem { candidate, references })
                    .map_err(|e| MetricError::ScorerFailed(e.to_string()))?;
                payload.push(b'\n');
            }
            stdin.write_all(&payload)?;
        }
        let output = child.wait_with_output()?;
        if !output.status.success() {
            return Err(MetricError::ScorerFailed(format!("exit status {}", output.status)));
        }
        let text = String::from_utf8_lossy(&output.stdout);
        let scores: Result<Vec<f64>, _> = text.lines().filter(|l| !l.trim().is_empty()).map(|l| l.trim().parse::<f64>()).collect();
        let scores = scores.map_err(|e| MetricError::ScorerFailed(e.to_string()))?;
        if scores.len() != items.len() {
            return Err(MetricError::ScorerFailed(format!(
                "expected {} scores, got {}",
                items.len(),
                scores.len()
            )));
        }
        Ok(scores)
    }
}

/// Scorer selection: a name plus, for learned metrics, a command and a
/// checkpoint path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec {
            name: PROXY_NAME.into(),
            command: None,
            checkpoint: None,
        }
    }
}

/// Builds the configured scorer. A learned scorer whose command or
/// checkpoint is missing is reported as unavailable; it never falls back to
/// the proxy.
pub fn resolve_scorer(spec: &ScorerSpec) -> Result<Box<dyn SemanticScorer>, MetricError> {
    if spec.name == PROXY_NAME {
        return Ok(Box::new(ProxyTokenF1));
    }
    let command = spec
        .command
        .clone()
        .ok_or_else(|| MetricError::ScorerUnavailable(format!("{}: no command configured", spec.name)))?;
    let checkpoint = spec
        .checkpoint
        .clone()
        .ok_or_else(|| MetricError::ScorerUnavailable(format!("{}: no checkpoint configured", spec.name)))?;
    if !checkpoint.exists() {
        return Err(MetricError::ScorerUnavailable(format!(
            "{}: checkpoint {} not found",
            spec.name,
            checkpoint.display()
        )));
    }
    Ok(Box::new(ExternalCommandScorer {
        name: spec.name.clone(),
        command,
        checkpoint,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticResult {
    /// Mean score times 100.
    pub percent: f64,
    pub per_pair: Vec<f64>,
    pub scorer: String,
    pub proxy: bool,
}

pub fn semantic_score(
    pairs: &[ScoredPair],
    scorer: &mut dyn SemanticScorer,
) -> Result<SemanticResult, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let items: Vec<(&str, &[String])> = pairs
        .iter()
        .map(|p| (p.hypothesis.as_str(), p.references.as_slice()))
        .collect();
    let per_pair = scorer.score_batch(&items)?;
    let percent = 100.0 * per_pair.iter().sum::<f64>() / per_pair.len() as f64;
    Ok(SemanticResult {
        percent,
        per_pair,
        scorer: scorer.name(),
        proxy: scorer.is_proxy(),
    })
}

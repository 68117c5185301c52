//! Encoder/decoder sequence formats and the parser for generated text.
//!
//! ```text
//! HTA / one-step   encoder: <story> </s>
//!                  decoder: Q1 <as> A1 <sp> Q2 <as> A2 ... </s>
//! WTA              encoder: <SKILL> <story> </s>
//!                  decoder: Q <as> A </s>
//! ```
//!
//! Field text is whitespace-normalized when rendered, so a rendered sequence
//! always has exactly one space between adjacent tokens.

use std::collections::BTreeMap;
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Skill, Story};
use crate::text::normalize_whitespace;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub eos: String,
    pub qa_sep: String,
    pub pair_sep: String,
    pub skill_tokens: BTreeMap<Skill, String>,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            eos: "</s>".into(),
            qa_sep: "<as>".into(),
            pair_sep: "<sp>".into(),
            skill_tokens: Skill::ALL
                .iter()
                .map(|s| (*s, s.control_token().to_string()))
                .collect(),
        }
    }
}

impl SpecialTokens {
    /// Every reserved token: structural ones first, then skills in order.
    pub fn all(&self) -> Vec<&str> {
        let mut all = vec![self.eos.as_str(), self.qa_sep.as_str(), self.pair_sep.as_str()];
        all.extend(self.skill_tokens.values().map(String::as_str));
        all
    }

    pub fn skill_token(&self, skill: Skill) -> &str {
        self.skill_tokens
            .get(&skill)
            .map(String::as_str)
            .unwrap_or_else(|| skill.control_token())
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        if self.skill_tokens.len() != Skill::ALL.len() {
            return Err(FormatError::InvalidTokens(
                "every skill needs a control token".into(),
            ));
        }
        let all = self.all();
        for (i, a) in all.iter().enumerate() {
            if a.is_empty() || a.chars().any(char::is_whitespace) {
                return Err(FormatError::InvalidTokens(format!(
                    "token {a:?} is empty or contains whitespace"
                )));
            }
            for (j, b) in all.iter().enumerate() {
                if i != j && b.contains(a) {
                    return Err(FormatError::InvalidTokens(format!(
                        "token {a:?} occurs inside {b:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// First reserved token occurring anywhere in `text`.
    pub fn find_reserved(&self, text: &str) -> Option<&str> {
        self.all().into_iter().find(|t| text.contains(t))
    }

    /// Replaces the angle brackets of every reserved token found in `text`
    /// with single guillemets, so `<as>` reads as `‹as›`.
    pub fn escape(&self, text: &str) -> String {
        let mut out = text.to_string();
        for token in self.all() {
            if out.contains(token) {
                let safe: String = token
                    .chars()
                    .map(|c| match c {
                        '<' => '\u{2039}',
                        '>' => '\u{203A}',
                        other => other,
                    })
                    .collect();
                out = out.replace(token, &safe);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatKind {
    /// General question form: story in, every pair out.
    Hta,
    /// Skill-controlled: skill token + story in, one pair out.
    Wta,
    /// Single-stage baseline: HTA layout over all corpora.
    OneStep,
    /// WTA targets (one pair per example) without the skill token.
    WtaUnskilled,
}

impl FormatKind {
    pub const ALL: [FormatKind; 4] = [
        FormatKind::Hta,
        FormatKind::Wta,
        FormatKind::OneStep,
        FormatKind::WtaUnskilled,
    ];

    pub fn uses_skill_token(self) -> bool {
        matches!(self, FormatKind::Wta)
    }

    pub fn single_pair_targets(self) -> bool {
        matches!(self, FormatKind::Wta | FormatKind::WtaUnskilled)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FormatKind::Hta => "hta",
            FormatKind::Wta => "wta",
            FormatKind::OneStep => "one_step",
            FormatKind::WtaUnskilled => "wta_unskilled",
        }
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("RESERVED_TOKEN_IN_TEXT: {token:?} appears in natural text")]
    ReservedTokenInText { token: String },
    #[error("SKILL_NOT_ALLOWED: {0} inputs take no skill token")]
    SkillNotAllowed(FormatKind),
    #[error("SKILL_REQUIRED: wta inputs need a skill")]
    SkillRequired,
    #[error("EMPTY_PAIRS: a target needs at least one pair")]
    EmptyPairs,
    #[error("WRONG_PAIR_COUNT: {kind} targets take exactly one pair, got {got}")]
    WrongPairCount { kind: FormatKind, got: usize },
    #[error("MISSING_SKILL_LABEL: pair {pair} of story {story} has no skill")]
    MissingSkillLabel { story: String, pair: String },
    #[error("INVALID_TOKENS: {0}")]
    InvalidTokens(String),
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::ReservedTokenInText { .. } => "RESERVED_TOKEN_IN_TEXT",
            FormatError::SkillNotAllowed(_) => "SKILL_NOT_ALLOWED",
            FormatError::SkillRequired => "SKILL_REQUIRED",
            FormatError::EmptyPairs => "EMPTY_PAIRS",
            FormatError::WrongPairCount { .. } => "WRONG_PAIR_COUNT",
            FormatError::MissingSkillLabel { .. } => "MISSING_SKILL_LABEL",
            FormatError::InvalidTokens(_) => "INVALID_TOKENS",
        }
    }
}

/// Counts tokens for length budgets.
pub trait TokenCounter {
    fn count_tokens(&self, text: &str) -> usize;
}

/// Fallback counter: whitespace-delimited tokens.
#[derive(Clone, Copy, Debug, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Renders and parses sequences for one token inventory.
#[derive(Clone, Debug, Default)]
pub struct SequenceFormat {
    pub tokens: SpecialTokens,
    /// Escape reserved tokens found in natural text instead of rejecting.
    pub escape_reserved: bool,
}

impl SequenceFormat {
    pub fn new(tokens: SpecialTokens) -> Result<Self, FormatError> {
        tokens.validate()?;
        Ok(SequenceFormat {
            tokens,
            escape_reserved: false,
        })
    }

    pub fn with_escaping(mut self, escape: bool) -> Self {
        self.escape_reserved = escape;
        self
    }

    fn clean(&self, text: &str) -> Result<String, FormatError> {
        let text = normalize_whitespace(text);
        match self.tokens.find_reserved(&text) {
            None => Ok(text),
            Some(_) if self.escape_reserved => Ok(normalize_whitespace(&self.tokens.escape(&text))),
            Some(token) => Err(FormatError::ReservedTokenInText {
                token: token.to_string(),
            }),
        }
    }

    fn check_skill(kind: FormatKind, skill: Option<Skill>) -> Result<(), FormatError> {
        match (kind.uses_skill_token(), skill) {
            (true, None) => Err(FormatError::SkillRequired),
            (false, Some(_)) => Err(FormatError::SkillNotAllowed(kind)),
            _ => Ok(()),
        }
    }

    pub fn render_input(
        &self,
        story: &Story,
        kind: FormatKind,
        skill: Option<Skill>,
    ) -> Result<String, FormatError> {
        self.render_input_text(&story.text, kind, skill)
    }

    pub fn render_input_text(
        &self,
        text: &str,
        kind: FormatKind,
        skill: Option<Skill>,
    ) -> Result<String, FormatError> {
        Self::check_skill(kind, skill)?;
        let body = self.clean(text)?;
        Ok(self.assemble_input(&body, skill))
    }

    fn assemble_input(&self, body: &str, skill: Option<Skill>) -> String {
        let mut out = String::with_capacity(body.len() + 16);
        if let Some(skill) = skill {
            out.push_str(self.tokens.skill_token(skill));
            out.push(' ');
        }
        if !body.is_empty() {
            out.push_str(body);
            out.push(' ');
        }
        out.push_str(&self.tokens.eos);
        out
    }

    pub fn render_target<'a, I>(&self, pairs: I, kind: FormatKind) -> Result<String, FormatError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut cleaned = Vec::new();
        for (q, a) in pairs {
            cleaned.push((self.clean(q)?, self.clean(a)?));
        }
        if cleaned.is_empty() {
            return Err(FormatError::EmptyPairs);
        }
        if kind.single_pair_targets() && cleaned.len() != 1 {
            return Err(FormatError::WrongPairCount {
                kind,
                got: cleaned.len(),
            });
        }
        Ok(self.assemble_target(&cleaned))
    }

    fn assemble_target(&self, pairs: &[(String, String)]) -> String {
        let mut out = String::new();
        for (i, (q, a)) in pairs.iter().enumerate() {
            if i > 0 {
                out.push(' ');
                out.push_str(&self.tokens.pair_sep);
                out.push(' ');
            }
            out.push_str(q);
            out.push(' ');
            out.push_str(&self.tokens.qa_sep);
            out.push(' ');
            out.push_str(a);
        }
        out.push(' ');
        out.push_str(&self.tokens.eos);
        out
    }

    /// Best-effort parse of generated decoder text. Never fails; problems
    /// are reported as diagnostics.
    pub fn parse_generation(&self, text: &str) -> ParsedGeneration {
        let mut diagnostics = Vec::new();
        let note = |d: Diagnostic, diags: &mut Vec<Diagnostic>| {
            if !diags.contains(&d) {
                diags.push(d);
            }
        };
        let trimmed = text.trim();
        let body = match trimmed.strip_suffix(self.tokens.eos.as_str()) {
            Some(rest) => rest,
            None => {
                note(Diagnostic::MissingEos, &mut diagnostics);
                trimmed
            }
        };
        let chunks: Vec<&str> = body.split(self.tokens.pair_sep.as_str()).collect();
        let last = chunks.len() - 1;
        let mut pairs = Vec::new();
        for (i, chunk) in chunks.iter().enumerate() {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                let d = if i == last && i > 0 {
                    Diagnostic::TrailingSeparator
                } else {
                    Diagnostic::EmptyPair
                };
                note(d, &mut diagnostics);
                continue;
            }
            match chunk.split_once(self.tokens.qa_sep.as_str()) {
                Some((q, a)) => {
                    let (q, a) = (q.trim(), a.trim());
                    if q.is_empty() || a.is_empty() {
                        note(Diagnostic::EmptyField, &mut diagnostics);
                    }
                    pairs.push(GeneratedPair {
                        question: q.to_string(),
                        answer: a.to_string(),
                    });
                }
                None => {
                    note(Diagnostic::MissingQaSep, &mut diagnostics);
                    pairs.push(GeneratedPair {
                        question: chunk.to_string(),
                        answer: String::new(),
                    });
                }
            }
        }
        ParsedGeneration {
            well_formed: diagnostics.is_empty(),
            pairs,
            diagnostics,
        }
    }

    /// Encoder text with the story truncated (tail words dropped, eos kept)
    /// so the whole sequence fits `budget` tokens.
    fn fitted_input(
        &self,
        story: &Story,
        skill: Option<Skill>,
        counter: &dyn TokenCounter,
        budget: usize,
    ) -> Result<String, FormatError> {
        let body = self.clean(&story.text)?;
        let full = self.assemble_input(&body, skill);
        if counter.count_tokens(&full) <= budget {
            return Ok(full);
        }
        let words: Vec<&str> = body.split(' ').collect();
        let (mut lo, mut hi) = (0usize, words.len());
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            let candidate = self.assemble_input(&words[..mid].join(" "), skill);
            if counter.count_tokens(&candidate) <= budget {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Ok(self.assemble_input(&words[..lo].join(" "), skill))
    }

    /// Renders a corpus into training examples.
    ///
    /// Single-pair formats emit one example per pair; HTA and one-step group
    /// every pair of a story into one target, dropping whole trailing pairs
    /// until the target fits the decoder budget.
    pub fn build_training_set(
        &self,
        stories: &[Story],
        kind: FormatKind,
        counter: &dyn TokenCounter,
        budget: LengthBudget,
    ) -> Result<Vec<EncodedExample>, FormatError> {
        let mut examples = Vec::new();
        for story in stories {
            if story.pairs.is_empty() {
                continue;
            }
            if kind.single_pair_targets() {
                for pair in &story.pairs {
                    let skill = if kind.uses_skill_token() {
                        Some(pair.skill.ok_or_else(|| FormatError::MissingSkillLabel {
                            story: story.id.clone(),
                            pair: pair.id.clone(),
                        })?)
                    } else {
                        None
                    };
                    let decoder = self.render_target([(pair.question.as_str(), pair.answer.as_str())], kind)?;
                    if counter.count_tokens(&decoder) > budget.decoder {
                        warn!(
                            "pair {} of story {} exceeds the decoder budget of {}; dropped",
                            pair.id, story.id, budget.decoder
                        );
                        continue;
                    }
                    examples.push(EncodedExample {
                        encoder: self.fitted_input(story, skill, counter, budget.encoder)?,
                        decoder,
                        kind,
                        story_id: story.id.clone(),
                        pair_ids: vec![pair.id.clone()],
                    });
                }
            } else {
                let mut cleaned = Vec::with_capacity(story.pairs.len());
                for p in &story.pairs {
                    cleaned.push((self.clean(&p.question)?, self.clean(&p.answer)?));
                }
                let mut keep = 0;
                let mut decoder = None;
                for k in 1..=cleaned.len() {
                    let rendered = self.assemble_target(&cleaned[..k]);
                    if counter.count_tokens(&rendered) > budget.decoder {
                        break;
                    }
                    keep = k;
                    decoder = Some(rendered);
                }
                let Some(decoder) = decoder else {
                    warn!(
                        "first pair of story {} exceeds the decoder budget of {}; dropped",
                        story.id, budget.decoder
                    );
                    continue;
                };
                if keep < cleaned.len() {
                    warn!(
                        "story {}: kept {keep} of {} pairs to fit the decoder budget",
                        story.id,
                        cleaned.len()
                    );
                }
                examples.push(EncodedExample {
                    encoder: self.fitted_input(story, None, counter, budget.encoder)?,
                    decoder,
                    kind,
                    story_id: story.id.clone(),
                    pair_ids: story.pairs[..keep].iter().map(|p| p.id.clone()).collect(),
                });
            }
        }
        Ok(examples)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBudget {
    pub encoder: usize,
    pub decoder: usize,
}

impl Default for LengthBudget {
    fn default() -> Self {
        LengthBudget {
            encoder: 512,
            decoder: 128,
        }
    }
}

/// One rendered training example; also the encoded-set dump record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub encoder: String,
    pub decoder: String,
    pub kind: FormatKind,
    pub story_id: String,
    pub pair_ids: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Diagnostic {
    MissingEos,
    EmptyPair,
    MissingQaSep,
    TrailingSeparator,
    EmptyField,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedPair {
    pub question: String,
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedGeneration {
    pub pairs: Vec<GeneratedPair>,
    pub well_formed: bool,
    pub diagnostics: Vec<Diagnostic>,
}

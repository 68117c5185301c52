use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Story-based reading comprehension skills.
///
/// Each skill names what a question asks the reader to do with a story.
/// Questions in the skill dataset carry exactly one of these labels, and the
/// label's control token (`<BSE>`, `<CT>`, ...) is what steers generation
/// toward that kind of question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Skill {
    /// Who the main characters are and where the story takes place.
    BasicStoryElements,
    /// Feelings, physical attributes and dispositions of characters.
    CharacterTraits,
    /// Locating the passage where the author states or explains a key point.
    CloseReading,
    /// Implied meaning of non-literal phrasing (similes, idioms, metaphors).
    FigurativeLanguage,
    /// Filling in what happened between scenes that the text skips.
    Inferring,
    /// Using textual clues to anticipate what happens next.
    Predicting,
    /// Naming the main characters, events, problem and resolution.
    Summarizing,
    /// Building a mental image of a described scene.
    Visualizing,
    /// Picking the sense of a word that fits its context.
    Vocabulary,
}

impl Skill {
    pub const ALL: [Skill; 9] = [
        Skill::BasicStoryElements,
        Skill::CharacterTraits,
        Skill::CloseReading,
        Skill::FigurativeLanguage,
        Skill::Inferring,
        Skill::Predicting,
        Skill::Summarizing,
        Skill::Visualizing,
        Skill::Vocabulary,
    ];

    /// Short code used in data files (`BSE`, `CT`, ...).
    pub fn code(self) -> &'static str {
        match self {
            Skill::BasicStoryElements => "BSE",
            Skill::CharacterTraits => "CT",
            Skill::CloseReading => "CR",
            Skill::FigurativeLanguage => "FL",
            Skill::Inferring => "I",
            Skill::Predicting => "P",
            Skill::Summarizing => "S",
            Skill::Visualizing => "V",
            Skill::Vocabulary => "VO",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Skill::BasicStoryElements => "Basic Story Elements",
            Skill::CharacterTraits => "Character Traits",
            Skill::CloseReading => "Close Reading",
            Skill::FigurativeLanguage => "Figurative Language",
            Skill::Inferring => "Inferring",
            Skill::Predicting => "Predicting",
            Skill::Summarizing => "Summarizing",
            Skill::Visualizing => "Visualizing",
            Skill::Vocabulary => "Vocabulary",
        }
    }

    /// Default control token, e.g. `<FL>`.
    pub fn control_token(self) -> &'static str {
        match self {
            Skill::BasicStoryElements => "<BSE>",
            Skill::CharacterTraits => "<CT>",
            Skill::CloseReading => "<CR>",
            Skill::FigurativeLanguage => "<FL>",
            Skill::Inferring => "<I>",
            Skill::Predicting => "<P>",
            Skill::Summarizing => "<S>",
            Skill::Visualizing => "<V>",
            Skill::Vocabulary => "<VO>",
        }
    }

    pub fn index(self) -> usize {
        Skill::ALL.iter().position(|s| *s == self).unwrap()
    }

    pub fn from_code(code: &str) -> Result<Skill, CorpusError> {
        Skill::ALL
            .iter()
            .copied()
            .find(|s| s.code() == code)
            .ok_or_else(|| CorpusError::UnknownSkill {
                code: code.to_string(),
                line: None,
            })
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Skill {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Skill::from_code(s)
    }
}

impl Serialize for Skill {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Skill {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = String::deserialize(deserializer)?;
        Skill::from_code(&code).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    /// Answerable from what the text states.
    Literal,
    /// Needs reasoning beyond what the text states.
    Inferential,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Literal => "literal",
            QuestionType::Inferential => "inferential",
        }
    }
}

impl FromStr for QuestionType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(QuestionType::Literal),
            "inferential" => Ok(QuestionType::Inferential),
            other => Err(CorpusError::Invalid(format!("unknown question type {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<Skill>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<QuestionType>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<String>,
    #[serde(default)]
    pub pairs: Vec<QaPair>,
}

impl Story {
    /// Distinct skills among this story's pairs, in enumeration order.
    pub fn skills(&self) -> Vec<Skill> {
        let mut present = [false; 9];
        for pair in &self.pairs {
            if let Some(skill) = pair.skill {
                present[skill.index()] = true;
            }
        }
        Skill::ALL
            .iter()
            .copied()
            .filter(|s| present[s.index()])
            .collect()
    }

    pub fn has_skill(&self, skill: Skill) -> bool {
        self.pairs.iter().any(|p| p.skill == Some(skill))
    }
}

/// Where a dataset came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub format: String,
}

/// The skill-annotated dataset: stories whose pairs all carry a skill and a
/// question type.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkillDataset {
    pub stories: Vec<Story>,
    pub provenance: Provenance,
}

impl SkillDataset {
    /// Builds a dataset after checking its invariants.
    pub fn new(stories: Vec<Story>, provenance: Provenance) -> Result<Self, CorpusError> {
        let dataset = SkillDataset {
            stories,
            provenance,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for story in &self.stories {
            if !seen.insert(story.id.as_str()) {
                return Err(CorpusError::DuplicateStoryId(story.id.clone()));
            }
            validate_story(story)?;
            for pair in &story.pairs {
                if pair.skill.is_none() {
                    return Err(CorpusError::Invalid(format!(
                        "pair {} in story {} has no skill",
                        pair.id, story.id
                    )));
                }
                if pair.qtype.is_none() {
                    return Err(CorpusError::Invalid(format!(
                        "pair {} in story {} has no question type",
                        pair.id, story.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pair_count(&self) -> usize {
        self.stories.iter().map(|s| s.pairs.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.stories.is_empty()
    }

    /// Iterates `(story, pair)` for every pair in corpus order.
    pub fn pairs(&self) -> impl Iterator<Item = (&Story, &QaPair)> {
        self.stories
            .iter()
            .flat_map(|s| s.pairs.iter().map(move |p| (s, p)))
    }
}

/// Which public QA format an external corpus was read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExternalFormat {
    /// Paragraph / question / answer-span records with an unanswerable flag.
    Extractive,
    /// Paragraph / question / free-text answer records.
    Commonsense,
}

impl ExternalFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            ExternalFormat::Extractive => "extractive",
            ExternalFormat::Commonsense => "commonsense",
        }
    }
}

impl FromStr for ExternalFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "extractive" => Ok(ExternalFormat::Extractive),
            "commonsense" => Ok(ExternalFormat::Commonsense),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// A public QA corpus normalized to passages with answerable pairs only.
/// Skill and question type are always unset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalQaCorpus {
    pub passages: Vec<Story>,
    pub source: ExternalFormat,
}

impl ExternalQaCorpus {
    pub fn pair_count(&self) -> usize {
        self.passages.iter().map(|s| s.pairs.len()).sum()
    }
}

pub(crate) fn validate_story(story: &Story) -> Result<(), CorpusError> {
    if story.text.split_whitespace().next().is_none() {
        return Err(CorpusError::Invalid(format!("story {} has empty text", story.id)));
    }
    for pair in &story.pairs {
        if pair.question.trim().is_empty() || pair.answer.trim().is_empty() {
            return Err(CorpusError::Invalid(format!(
                "pair {} in story {} has an empty question or answer",
                pair.id, story.id
            )));
        }
    }
    Ok(())
}

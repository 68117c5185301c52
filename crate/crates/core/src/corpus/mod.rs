//! Skill-annotated story corpus and the two external QA corpora.

mod external;
mod fewshot;
mod io;
mod model;
mod split;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

pub use external::load_external_corpus;
pub use fewshot::{subsample_few_shot, FewShotAmount};
pub use io::{load_skill_dataset, parse_skill_dataset, save_skill_dataset, write_skill_dataset};
pub use model::{
    ExternalFormat, ExternalQaCorpus, Provenance, QaPair, QuestionType, Skill, SkillDataset, Story,
};
pub use split::{stratified_split, DatasetSplit, SplitSpec};
pub use stats::{compute_stats, CorpusStats, SkillStats};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unknown skill {code:?}{}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    UnknownSkill { code: String, line: Option<usize> },
    #[error("duplicate story id {0:?}")]
    DuplicateStoryId(String),
    #[error("unknown corpus format {0:?} (expected extractive or commonsense)")]
    UnknownFormat(String),
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("invalid few-shot amount: {0}")]
    InvalidAmount(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

//! Multi-stage training recipes and their on-disk artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! recipe.json            resolved recipe
//! stage-<n>/weights.bin  backend snapshot after stage n
//! stage-<n>/report.json  TrainReport, written last
//! ```
//!
//! A stage whose `report.json` exists is complete; resuming restores its
//! weights and continues with the next stage.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use skillforge_core::backend::{BackendCounter, BackendError, Seq2SeqBackend};
use skillforge_core::corpus::Story;
use skillforge_core::seqformat::{FormatError, FormatKind, SequenceFormat};

use crate::train::{to_id_pairs, train_stage, TrainConfig, TrainError, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecipeName {
    /// General QG on external corpora, then skill-conditioned fine-tuning.
    HtaWta,
    /// Skill-conditioned training only.
    T5Wta,
    /// All corpora in one stage, no skill token.
    OneStep,
    /// Skill data with the skill token removed.
    WtaUnskilled,
}

impl RecipeName {
    pub const ALL: [RecipeName; 4] = [
        RecipeName::HtaWta,
        RecipeName::T5Wta,
        RecipeName::OneStep,
        RecipeName::WtaUnskilled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecipeName::HtaWta => "HTA_WTA",
            RecipeName::T5Wta => "T5_WTA",
            RecipeName::OneStep => "ONE_STEP",
            RecipeName::WtaUnskilled => "WTA_UNSKILLED",
        }
    }

    /// Format of the final stage, which decides how the checkpoint is
    /// prompted at generation time.
    pub fn final_format(self) -> FormatKind {
        match self {
            RecipeName::HtaWta | RecipeName::T5Wta => FormatKind::Wta,
            RecipeName::OneStep => FormatKind::OneStep,
            RecipeName::WtaUnskilled => FormatKind::WtaUnskilled,
        }
    }
}

impl fmt::Display for RecipeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecipeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecipeName::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s) || r.as_str().replace('_', "-").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown recipe {s:?}; expected one of HTA_WTA, T5_WTA, ONE_STEP, WTA_UNSKILLED"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusRole {
    ExternalTrain,
    ExternalVal,
    SkillTrain,
    SkillVal,
}

impl CorpusRole {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusRole::ExternalTrain => "external_train",
            CorpusRole::ExternalVal => "external_val",
            CorpusRole::SkillTrain => "skill_train",
            CorpusRole::SkillVal => "skill_val",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    /// 1-based.
    pub index: usize,
    pub label: String,
    pub train: Vec<CorpusRole>,
    pub val: Vec<CorpusRole>,
    pub format: FormatKind,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecipe {
    pub name: RecipeName,
    pub stages: Vec<StageSpec>,
    /// Fresh optimizer state at the start of every stage after the first.
    pub reset_optimizer_between_stages: bool,
}

/// Seed of stage `index` (1-based) derived from the run seed.
pub fn stage_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl StageRecipe {
    pub fn standard(name: RecipeName, config: &TrainConfig) -> StageRecipe {
        use CorpusRole::*;
        let stage = |index: usize, label: &str, train: Vec<CorpusRole>, val: Vec<CorpusRole>, format| StageSpec {
            index,
            label: label.into(),
            train,
            val,
            format,
            config: TrainConfig {
                seed: stage_seed(config.seed, index),
                ..config.clone()
            },
        };
        let stages = match name {
            RecipeName::HtaWta => vec![
                stage(1, "hta", vec![ExternalTrain], vec![ExternalVal], FormatKind::Hta),
                stage(2, "wta", vec![SkillTrain], vec![SkillVal], FormatKind::Wta),
            ],
            RecipeName::T5Wta => vec![stage(1, "wta", vec![SkillTrain], vec![SkillVal], FormatKind::Wta)],
            RecipeName::OneStep => vec![stage(
                1,
                "one_step",
                vec![ExternalTrain, SkillTrain],
                vec![ExternalVal, SkillVal],
                FormatKind::OneStep,
            )],
            RecipeName::WtaUnskilled => vec![stage(
                1,
                "wta_unskilled",
                vec![SkillTrain],
                vec![SkillVal],
                FormatKind::WtaUnskilled,
            )],
        };
        StageRecipe {
            name,
            stages,
            reset_optimizer_between_stages: true,
        }
    }
}

/// Stories bound to each corpus role. External train/val hold every external
/// corpus concatenated.
#[derive(Clone, Debug, Default)]
pub struct CorpusBindings {
    pub external_train: Vec<Story>,
    pub external_val: Vec<Story>,
    pub skill_train: Vec<Story>,
    pub skill_val: Vec<Story>,
}

impl CorpusBindings {
    pub fn get(&self, role: CorpusRole) -> &[Story] {
        match role {
            CorpusRole::ExternalTrain => &self.external_train,
            CorpusRole::ExternalVal => &self.external_val,
            CorpusRole::SkillTrain => &self.skill_train,
            CorpusRole::SkillVal => &self.skill_val,
        }
    }
}

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("stage {stage}: corpus {role} is not bound or empty")]
    MissingCorpus { stage: usize, role: &'static str },
    #[error("stage {stage}: {source}")]
    Format { stage: usize, source: FormatError },
    #[error("stage {stage}: {source}")]
    Train { stage: usize, source: TrainError },
    #[error("stage {stage}: {source}")]
    Backend { stage: usize, source: BackendError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// Skip stages whose artifacts are already complete.
    pub resume: bool,
    /// Stop after this many stages (1-based count).
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeOutcome {
    pub reports: Vec<TrainReport>,
    /// Stages loaded from existing artifacts instead of trained.
    pub resumed: Vec<usize>,
}

impl RecipeOutcome {
    pub fn final_report(&self) -> Option<&TrainReport> {
        self.reports.last()
    }
}

/// What `recipe.json` holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeRecord {
    pub backend: String,
    pub recipe: StageRecipe,
}

pub fn stage_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("stage-{index}"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RecipeError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| RecipeError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| RecipeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, RecipeError> {
    fs::read(path).map_err(|source| RecipeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn completed_stage(dir: &Path) -> Result<Option<(TrainReport, Vec<u8>)>, RecipeError> {
    let report_path = dir.join("report.json");
    let weights_path = dir.join("weights.bin");
    if !report_path.is_file() || !weights_path.is_file() {
        return Ok(None);
    }
    let report = serde_json::from_slice(&read_file(&report_path)?).map_err(|e| RecipeError::Artifact {
        path: report_path.clone(),
        message: e.to_string(),
    })?;
    Ok(Some((report, read_file(&weights_path)?)))
}

fn render(
    backend: &dyn Seq2SeqBackend,
    format: &SequenceFormat,
    bindings: &CorpusBindings,
    roles: &[CorpusRole],
    stage: &StageSpec,
) -> Result<Vec<skillforge_core::backend::IdPair>, RecipeError> {
    let mut stories = Vec::new();
    for &role in roles {
        let bound = bindings.get(role);
        if bound.is_empty() {
            return Err(RecipeError::MissingCorpus {
                stage: stage.index,
                role: role.as_str(),
            });
        }
        stories.extend_from_slice(bound);
    }
    let examples = format
        .build_training_set(&stories, stage.format, &BackendCounter(backend), stage.config.budget())
        .map_err(|source| RecipeError::Format {
            stage: stage.index,
            source,
        })?;
    Ok(to_id_pairs(backend, &examples))
}

/// Runs the stages in order, each starting from the previous stage's best
/// parameters.
pub fn run_recipe(
    backend: &mut dyn Seq2SeqBackend,
    recipe: &StageRecipe,
    bindings: &CorpusBindings,
    format: &SequenceFormat,
    options: &RunOptions,
) -> Result<RecipeOutcome, RecipeError> {
    let specials = format.tokens.all();
    backend
        .register_special_tokens(&specials)
        .map_err(|source| RecipeError::Backend { stage: 0, source })?;
    if let Some(out) = &options.out_dir {
        let record = RecipeRecord {
            backend: backend.kind().to_string(),
            recipe: recipe.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&record).expect("recipe serializes");
        json.push(b'\n');
        write_file(&out.join("recipe.json"), &json)?;
    }
    let mut outcome = RecipeOutcome {
        reports: Vec::new(),
        resumed: Vec::new(),
    };
    for stage in &recipe.stages {
        if options.stop_after.is_some_and(|n| stage.index > n) {
            break;
        }
        let dir = options.out_dir.as_ref().map(|o| stage_dir(o, stage.index));
        if options.resume {
            if let Some(dir) = &dir {
                if let Some((report, weights)) = completed_stage(dir)? {
                    backend
                        .restore(&weights)
                        .map_err(|source| RecipeError::Backend {
                            stage: stage.index,
                            source,
                        })?;
                    info!("stage {} ({}) already complete; resumed", stage.index, stage.label);
                    outcome.reports.push(report);
                    outcome.resumed.push(stage.index);
                    continue;
                }
            }
        }
        let train = render(backend, format, bindings, &stage.train, stage)?;
        let val = render(backend, format, bindings, &stage.val, stage)?;
        if stage.index > 1 && recipe.reset_optimizer_between_stages {
            backend.reset_optimizer();
        }
        info!(
            "stage {} ({}): {} training and {} validation examples",
            stage.index,
            stage.label,
            train.len(),
            val.len()
        );
        let report = train_stage(backend, &train, &val, &stage.config).map_err(|source| RecipeError::Train {
            stage: stage.index,
            source,
        })?;
        if let Some(dir) = &dir {
            write_file(&dir.join("weights.bin"), &backend.snapshot())?;
            let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
            json.push(b'\n');
            write_file(&dir.join("report.json"), &json)?;
        }
        outcome.reports.push(report);
    }
    Ok(outcome)
}

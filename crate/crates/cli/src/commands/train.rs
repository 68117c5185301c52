use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use skillforge_core::backend::{BackendCounter, Seq2SeqBackend};
use skillforge_core::corpus::{subsample_few_shot, FewShotAmount};
use skillforge_core::seqformat::{FormatKind, SequenceFormat, SpecialTokens};
use skillforge_modelkit::{
    create_backend, load_backend, run_recipe, stage_dir, CorpusBindings, RecipeName, RecipeOutcome, RecipeRecord,
    RunOptions, StageRecipe, to_id_pairs,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::layout::{write_json, Layout, Prepared};
use crate::manifest::Manifest;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, Default)]
pub struct TrainRequest {
    pub resume: bool,
    pub stop_after: Option<usize>,
    pub few_shot: Option<FewShotAmount>,
    /// Defaults to `runs/<RECIPE>` under the output directory.
    pub run_dir: Option<PathBuf>,
}

/// Written next to `recipe.json` once every stage has finished.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub backend: String,
    pub recipe: RecipeName,
    pub final_stage: usize,
    pub final_format: FormatKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub few_shot: Option<FewShotAmount>,
    pub skill_train_pairs: usize,
    pub outcome: RecipeOutcome,
}

pub fn format() -> SequenceFormat {
    SequenceFormat::new(SpecialTokens::default()).expect("default tokens are valid")
}

pub fn new_backend(config: &ExperimentConfig, prepared: &Prepared) -> Result<Box<dyn Seq2SeqBackend>> {
    create_backend(
        &config.backend_name(),
        prepared.vocabulary_texts(),
        &SpecialTokens::default(),
        &config.model_config(),
    )
    .map_err(|e| CliError::config(e.to_string()))
}

pub fn bindings(prepared: &Prepared, config: &ExperimentConfig, few_shot: Option<FewShotAmount>) -> Result<CorpusBindings> {
    let skill_train = match few_shot {
        Some(a) => subsample_few_shot(&prepared.skill_train, a, config.seed)?,
        None => prepared.skill_train.clone(),
    };
    Ok(CorpusBindings {
        external_train: prepared.external_train.clone(),
        external_val: prepared.external_val.clone(),
        skill_train: skill_train.stories,
        skill_val: prepared.skill_val.stories.clone(),
    })
}

/// Trains `recipe` from a fresh backend into `run_dir`.
pub fn train_into(
    config: &ExperimentConfig,
    prepared: &Prepared,
    recipe: RecipeName,
    run_dir: &Path,
    request: &TrainRequest,
) -> Result<CheckpointInfo> {
    let bindings = bindings(prepared, config, request.few_shot)?;
    let mut backend = new_backend(config, prepared)?;
    let stage_recipe = StageRecipe::standard(recipe, &config.train_config());
    let outcome = run_recipe(
        backend.as_mut(),
        &stage_recipe,
        &bindings,
        &format(),
        &RunOptions {
            out_dir: Some(run_dir.to_path_buf()),
            resume: request.resume,
            stop_after: request.stop_after,
        },
    )?;
    let info = CheckpointInfo {
        backend: backend.kind().to_string(),
        recipe,
        final_stage: outcome.reports.len(),
        final_format: stage_recipe.stages[outcome.reports.len() - 1].format,
        few_shot: request.few_shot,
        skill_train_pairs: bindings.skill_train.iter().map(|s| s.pairs.len()).sum(),
        outcome,
    };
    if info.final_stage == stage_recipe.stages.len() {
        write_json(&run_dir.join(CHECKPOINT_FILE), &info)?;
    }
    Ok(info)
}

pub fn train(config: &ExperimentConfig, request: &TrainRequest) -> Result<CheckpointInfo> {
    config.validate()?;
    let root = config.output_dir()?.to_path_buf();
    let layout = Layout::new(&root);
    let prepared = Prepared::load(&layout)?;
    let run_dir = request.run_dir.clone().unwrap_or_else(|| layout.run_dir(config.recipe));
    let info = train_into(config, &prepared, config.recipe, &run_dir, request)?;
    if let Some(r) = info.outcome.final_report() {
        info!(
            "{}: best validation loss {:.4} at epoch {} of stage {}",
            config.recipe, r.best_val_loss, r.best_epoch, info.final_stage
        );
    }
    let mut manifest = Manifest::load_or_new(&root, config.seed)?;
    manifest.record_tree(&root, &run_dir)?;
    manifest.save(&root)?;
    Ok(info)
}

/// A trained model plus how it expects to be prompted.
pub struct Checkpoint {
    pub backend: Box<dyn Seq2SeqBackend>,
    pub info: CheckpointInfo,
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let read = |name: &str| -> Result<Vec<u8>> {
        let p = dir.join(name);
        fs::read(&p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
    };
    let info: CheckpointInfo = serde_json::from_slice(&read(CHECKPOINT_FILE)?)
        .map_err(|e| CliError::data(format!("{}: {e}", dir.join(CHECKPOINT_FILE).display())))?;
    let record: RecipeRecord = serde_json::from_slice(&read("recipe.json")?)
        .map_err(|e| CliError::data(format!("{}: {e}", dir.join("recipe.json").display())))?;
    if record.recipe.name != info.recipe || record.backend != info.backend {
        return Err(CliError::data(format!("{}: recipe.json and {CHECKPOINT_FILE} disagree", dir.display())));
    }
    let weights_path = stage_dir(dir, info.final_stage).join("weights.bin");
    let weights = fs::read(&weights_path).map_err(|e| CliError::data(format!("{}: {e}", weights_path.display())))?;
    let backend = load_backend(&info.backend, &weights)
        .map_err(|e| CliError::data(format!("{}: {e}", weights_path.display())))?;
    Ok(Checkpoint { backend, info })
}

/// Mean per-token loss of `stories` rendered in `kind` under the training
/// length budget.
pub fn held_out_loss(
    backend: &dyn Seq2SeqBackend,
    stories: &[skillforge_core::corpus::Story],
    kind: FormatKind,
    config: &ExperimentConfig,
) -> Result<f64> {
    let examples = format()
        .build_training_set(stories, kind, &BackendCounter(backend), config.train_config().budget())
        .map_err(|e| CliError::data(format!("encoding held-out stories as {kind}: {e}")))?;
    let ids = to_id_pairs(backend, &examples);
    if ids.is_empty() {
        return Err(CliError::data("no held-out example fits the length budget"));
    }
    backend
        .loss(&ids)
        .map(|s| s.mean())
        .map_err(|e| CliError::Training(e.to_string()))
}

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use skillforge_core::corpus::FewShotAmount;
use skillforge_core::seqformat::FormatKind;
use skillforge_modelkit::{stage_dir, RecipeName};

use crate::commands::evaluate::{score_records, write_evaluation, JudgmentSource};
use crate::commands::generate::{generate_records, SkillSelection};
use crate::commands::train::{held_out_loss, load_checkpoint, train_into, TrainRequest};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::layout::{write_bytes, write_json, write_jsonl, Layout, Prepared};
use crate::manifest::Manifest;

pub const SHARED_HTA_DIR: &str = "shared-hta";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub recipe: RecipeName,
    pub amount: FewShotAmount,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub skill_train_pairs: usize,
    pub test_loss: Option<f64>,
    pub bleu: Option<[f64; 4]>,
    pub semantic: Option<f64>,
    pub skill_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct FewShotRequest {
    /// Overrides the config's amounts.
    pub amounts: Option<Vec<FewShotAmount>>,
    pub recipes: Option<Vec<RecipeName>>,
    pub judgments: Option<JudgmentSource>,
}

fn copy_tree(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to).map_err(|e| CliError::io(to, e))?;
    for entry in fs::read_dir(from).map_err(|e| CliError::io(from, e))? {
        let entry = entry.map_err(|e| CliError::io(from, e))?;
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), &target).map_err(|e| CliError::io(&target, e))?;
        }
    }
    Ok(())
}

fn point_dir(layout: &Layout, recipe: RecipeName, amount: FewShotAmount) -> PathBuf {
    layout.fewshot_dir().join(recipe.as_str()).join(amount.to_string())
}

/// Stage one of HTA_WTA does not see skill data, so every point reuses one
/// copy of it.
fn shared_hta(config: &ExperimentConfig, prepared: &Prepared, layout: &Layout) -> Result<PathBuf> {
    let dir = layout.fewshot_dir().join(SHARED_HTA_DIR);
    train_into(
        config,
        prepared,
        RecipeName::HtaWta,
        &dir,
        &TrainRequest {
            resume: true,
            stop_after: Some(1),
            ..TrainRequest::default()
        },
    )?;
    Ok(dir)
}

fn run_point(
    config: &ExperimentConfig,
    prepared: &Prepared,
    dir: &Path,
    recipe: RecipeName,
    amount: FewShotAmount,
    judgments: Option<&JudgmentSource>,
) -> Result<SweepRow> {
    let info = train_into(
        config,
        prepared,
        recipe,
        dir,
        &TrainRequest {
            resume: true,
            few_shot: Some(amount),
            ..TrainRequest::default()
        },
    )?;
    let checkpoint = load_checkpoint(dir)?;
    let test = &prepared.skill_test.stories;
    let test_loss = held_out_loss(checkpoint.backend.as_ref(), test, info.final_format, config)?;
    let selection = matches!(info.final_format, FormatKind::Wta | FormatKind::WtaUnskilled)
        .then_some(SkillSelection::Annotated);
    let records = generate_records(&checkpoint, test, selection, config)?;
    write_jsonl(&dir.join("generations.jsonl"), &records)?;
    let label = format!("{recipe}@{amount}");
    let eval = score_records(config, &label, &records, test, judgments.filter(|_| selection.is_some()))?;
    write_evaluation(&dir.join("eval"), &eval)?;
    Ok(SweepRow {
        recipe,
        amount,
        status: "ok".into(),
        error: None,
        skill_train_pairs: info.skill_train_pairs,
        test_loss: Some(test_loss),
        bleu: Some(eval.report.bleu()),
        semantic: eval.report.semantic_score,
        skill_accuracy: eval.skill_control.map(|s| s.accuracy),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.4}"))
}

fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::data(e.to_string());
    w.write_record([
        "Recipe", "Amount", "Status", "Pairs", "TestLoss", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "Semantic",
        "SkillAccuracy", "Error",
    ])
    .map_err(fail)?;
    for r in rows {
        let b = r.bleu.map_or([None; 4], |b| b.map(Some));
        let mut rec = vec![r.recipe.to_string(), r.amount.to_string(), r.status.clone(), r.skill_train_pairs.to_string()];
        rec.push(opt(r.test_loss));
        rec.extend(b.iter().map(|x| opt(*x)));
        rec.push(opt(r.semantic));
        rec.push(opt(r.skill_accuracy));
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::data(e.to_string()))
}

/// Trains, generates and scores every (recipe, amount) point. A failing
/// point is recorded and the sweep continues.
pub fn fewshot(config: &ExperimentConfig, request: &FewShotRequest) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let root = config.output_dir()?.to_path_buf();
    let layout = Layout::new(&root);
    let prepared = Prepared::load(&layout)?;
    let mut amounts = request.amounts.clone().unwrap_or_else(|| config.fewshot.amounts.clone());
    for a in &amounts {
        a.validate()?;
    }
    amounts.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).expect("amounts are finite"));
    amounts.dedup();
    let recipes = request.recipes.clone().unwrap_or_else(|| config.fewshot.recipes.clone());
    if amounts.is_empty() || recipes.is_empty() {
        return Err(CliError::config("few-shot sweep needs at least one amount and one recipe"));
    }

    let shared = if recipes.contains(&RecipeName::HtaWta) {
        Some(shared_hta(config, &prepared, &layout)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &recipe in &recipes {
        for &amount in &amounts {
            let dir = point_dir(&layout, recipe, amount);
            let outcome = (|| {
                if let (RecipeName::HtaWta, Some(shared)) = (recipe, &shared) {
                    copy_tree(&stage_dir(shared, 1), &stage_dir(&dir, 1))?;
                }
                run_point(config, &prepared, &dir, recipe, amount, request.judgments.as_ref())
            })();
            let row = outcome.unwrap_or_else(|e| {
                warn!("{recipe} at {amount}: {e}");
                SweepRow {
                    recipe,
                    amount,
                    status: "failed".into(),
                    error: Some(e.to_string()),
                    skill_train_pairs: 0,
                    test_loss: None,
                    bleu: None,
                    semantic: None,
                    skill_accuracy: None,
                }
            });
            info!("{recipe} at {amount}: {}", row.status);
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| {
        a.amount
            .sort_key()
            .partial_cmp(&b.amount.sort_key())
            .expect("amounts are finite")
            .then(a.recipe.cmp(&b.recipe))
    });

    let dir = layout.fewshot_dir();
    write_bytes(&dir.join("sweep.csv"), &sweep_csv(&rows)?)?;
    write_json(&dir.join("sweep.json"), &rows)?;
    let mut manifest = Manifest::load_or_new(&root, config.seed)?;
    manifest.record_tree(&root, &dir)?;
    manifest.save(&root)?;
    Ok(rows)
}

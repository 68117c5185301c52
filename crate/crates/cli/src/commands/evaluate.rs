use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use skillforge_core::corpus::{QuestionType, Story};
use skillforge_core::metrics::{
    evaluate, resolve_scorer, semantic_score, skill_control_scores, MetricReport, ScoredPair, SkillControlReport,
    SkillJudgment, SMOOTHING_ID, TOKENIZER_ID,
};
use skillforge_core::synthetic::classify_question;

use crate::commands::generate::GenerationRecord;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::layout::{read_jsonl, read_stories, write_bytes, write_json, Layout};
use crate::manifest::Manifest;

/// Where skill-control judgments come from.
#[derive(Clone, Debug, PartialEq)]
pub enum JudgmentSource {
    /// Rater labels (JSONL of judgments).
    File(PathBuf),
    /// The synthetic corpus's template classifier.
    Templates,
}

#[derive(Clone, Debug, Default)]
pub struct EvaluateRequest {
    pub generations: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Label for the table row; defaults to the generations' recipe.
    pub model: Option<String>,
    pub judgments: Option<JudgmentSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedRecord {
    pub story_id: String,
    pub skill: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub model: String,
    pub tokenizer: String,
    pub smoothing: String,
    pub scorer: String,
    pub proxy: bool,
    pub report: MetricReport,
    /// Scored pairs left out of each breakdown for lack of a label.
    pub excluded: BTreeMap<String, usize>,
    pub unmatched: Vec<UnmatchedRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_control: Option<SkillControlReport>,
}

/// Joins each generation to the reference questions of its story, limited
/// to the requested skill when there is one.
pub fn join_references(
    records: &[GenerationRecord],
    stories: &[Story],
) -> (Vec<ScoredPair>, Vec<UnmatchedRecord>) {
    let by_id: BTreeMap<&str, &Story> = stories.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for r in records {
        let miss = |reason: &str| UnmatchedRecord {
            story_id: r.story_id.clone(),
            skill: r.skill.map(|s| s.code().to_string()),
            reason: reason.to_string(),
        };
        let Some(story) = by_id.get(r.story_id.as_str()) else {
            unmatched.push(miss("story not in the reference set"));
            continue;
        };
        let refs: Vec<_> = story
            .pairs
            .iter()
            .filter(|p| r.skill.is_none() || p.skill == r.skill)
            .collect();
        if refs.is_empty() {
            unmatched.push(miss("no reference question for this skill"));
            continue;
        }
        let qtypes: Vec<Option<QuestionType>> = refs.iter().map(|p| p.qtype).collect();
        let qtype = if qtypes.iter().all(|q| *q == qtypes[0]) { qtypes[0] } else { None };
        pairs.push(ScoredPair {
            hypothesis: r.question().to_string(),
            references: refs.iter().map(|p| p.question.clone()).collect(),
            story_id: r.story_id.clone(),
            skill: r.skill,
            qtype,
        });
    }
    (pairs, unmatched)
}

/// Labels every skill-prompted generation with the template classifier.
pub fn template_judgments(records: &[GenerationRecord]) -> Vec<SkillJudgment> {
    records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            r.skill.map(|intended| SkillJudgment {
                question_id: format!("{}#{i}", r.story_id),
                intended,
                judged: classify_question(r.question()),
            })
        })
        .collect()
}

pub fn score_records(
    config: &ExperimentConfig,
    model: &str,
    records: &[GenerationRecord],
    references: &[Story],
    judgments: Option<&JudgmentSource>,
) -> Result<EvaluationOutput> {
    let (pairs, unmatched) = join_references(records, references);
    if pairs.is_empty() {
        return Err(CliError::data("no generation could be matched to a reference"));
    }
    let mut scorer = resolve_scorer(&config.metrics.scorer)?;
    let semantic = semantic_score(&pairs, scorer.as_mut())?;
    let (report, excluded) = evaluate(&pairs, Some(&semantic))?;
    let skill_control = match judgments {
        None => None,
        Some(JudgmentSource::Templates) => Some(skill_control_scores(&template_judgments(records))?),
        Some(JudgmentSource::File(p)) => Some(skill_control_scores(&read_jsonl::<SkillJudgment>(p)?)?),
    };
    Ok(EvaluationOutput {
        model: model.to_string(),
        tokenizer: TOKENIZER_ID.into(),
        smoothing: SMOOTHING_ID.into(),
        scorer: semantic.scorer,
        proxy: semantic.proxy,
        report,
        excluded,
        unmatched,
        skill_control,
    })
}

fn score_row(name: &str, r: &MetricReport) -> Vec<String> {
    let mut row = vec![name.to_string()];
    row.extend(r.bleu().iter().map(|b| format!("{b:.4}")));
    row.push(r.semantic_score.map_or(String::new(), |s| format!("{s:.4}")));
    row
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::data(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::data(e.to_string()))
}

pub const TABLE_HEADER: [&str; 6] = ["Model", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "Semantic"];

/// metrics.json, table.csv and one breakdown CSV per dimension.
pub fn write_evaluation(dir: &Path, out: &EvaluationOutput) -> Result<()> {
    write_json(&dir.join("metrics.json"), out)?;
    write_bytes(&dir.join("table.csv"), &csv_bytes(&TABLE_HEADER, &[score_row(&out.model, &out.report)])?)?;
    for (dim, groups) in &out.report.breakdowns {
        let rows: Vec<Vec<String>> = groups
            .iter()
            .map(|(g, r)| {
                let mut row = score_row(g, r);
                row.push(r.n.to_string());
                row
            })
            .collect();
        let mut header = TABLE_HEADER.to_vec();
        header[0] = "Group";
        header.push("N");
        write_bytes(&dir.join(format!("breakdown_{dim}.csv")), &csv_bytes(&header, &rows)?)?;
    }
    Ok(())
}

pub fn cmd_evaluate(config: &ExperimentConfig, request: &EvaluateRequest) -> Result<(PathBuf, EvaluationOutput)> {
    config.validate()?;
    let root = config.output_dir.clone();
    let layout = root.as_ref().map(Layout::new);
    let generations = request
        .generations
        .clone()
        .or_else(|| layout.as_ref().map(|l| l.generations(config.recipe)))
        .ok_or_else(|| CliError::config("no generations file; pass --generations or --out"))?;
    let references = request
        .references
        .clone()
        .or_else(|| layout.as_ref().map(|l| l.skill_split("test")))
        .ok_or_else(|| CliError::config("no reference stories; pass --references or --out"))?;
    let out_dir = request
        .out_dir
        .clone()
        .or_else(|| layout.as_ref().map(|l| l.eval_dir(config.recipe)))
        .ok_or_else(|| CliError::config("no output directory; pass --eval-dir or --out"))?;
    let records: Vec<GenerationRecord> = read_jsonl(&generations)?;
    let stories = read_stories(&references)?;
    let model = request
        .model
        .clone()
        .or_else(|| records.first().map(|r| r.recipe.to_string()))
        .unwrap_or_else(|| config.recipe.to_string());
    let output = score_records(config, &model, &records, &stories, request.judgments.as_ref())?;
    write_evaluation(&out_dir, &output)?;
    if let Some(root) = &root {
        let mut manifest = Manifest::load_or_new(root, config.seed)?;
        manifest.record_tree(root, &out_dir)?;
        manifest.save(root)?;
    }
    Ok((out_dir, output))
}

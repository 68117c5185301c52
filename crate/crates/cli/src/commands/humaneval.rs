use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use skillforge_core::corpus::Story;
use skillforge_core::metrics::{
    export_human_eval_packet, import_human_eval, read_packet_key, write_packet, HumanEvalSample, ImportOutcome,
};

use crate::commands::generate::GenerationRecord;
use crate::error::{CliError, Result};
use crate::layout::{read_jsonl, read_stories, write_json};

pub const DEFAULT_PACKET_SIZE: usize = 110;
pub const PACKET_FILE: &str = "packet.csv";
pub const KEY_FILE: &str = "key.json";

/// One sample per generation with a non-empty question.
pub fn sample_pool(models: &[(String, PathBuf)], stories: &[Story]) -> Result<Vec<HumanEvalSample>> {
    let texts: BTreeMap<&str, &str> = stories.iter().map(|s| (s.id.as_str(), s.text.as_str())).collect();
    let mut pool = Vec::new();
    for (model, path) in models {
        let records: Vec<GenerationRecord> = read_jsonl(path)?;
        for r in records {
            let Some(text) = texts.get(r.story_id.as_str()) else {
                return Err(CliError::data(format!("{}: story {} is not in the story file", path.display(), r.story_id)));
            };
            if r.question().trim().is_empty() {
                continue;
            }
            pool.push(HumanEvalSample {
                model: model.clone(),
                story_id: r.story_id.clone(),
                story_text: text.to_string(),
                question: r.question().to_string(),
            });
        }
    }
    Ok(pool)
}

/// Writes `packet.csv` and `key.json` into `out_dir`; returns the row count.
pub fn export(models: &[(String, PathBuf)], stories: &Path, size: usize, seed: u64, out_dir: &Path) -> Result<usize> {
    if models.is_empty() {
        return Err(CliError::config("no generations given; pass MODEL=PATH"));
    }
    let pool = sample_pool(models, &read_stories(stories)?)?;
    let (rows, key) = export_human_eval_packet(&pool, size, seed);
    let packet = out_dir.join(PACKET_FILE);
    crate::layout::create_parent(&packet)?;
    let file = File::create(&packet).map_err(|e| CliError::io(&packet, e))?;
    write_packet(&rows, file)?;
    write_json(&out_dir.join(KEY_FILE), &key)?;
    Ok(rows.len())
}

pub fn import(packet: &Path, key: &Path, output: Option<&Path>) -> Result<ImportOutcome> {
    let key_file = File::open(key).map_err(|e| CliError::io(key, e))?;
    let key = read_packet_key(key_file)?;
    let packet_file = File::open(packet).map_err(|e| CliError::io(packet, e))?;
    let outcome = import_human_eval(packet_file, &key)?;
    if let Some(out) = output {
        write_json(out, &outcome)?;
    }
    Ok(outcome)
}

/// Parses `MODEL=PATH`.
pub fn parse_model_input(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((m, p)) if !m.is_empty() && !p.is_empty() => Ok((m.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected MODEL=PATH, got {s:?}")),
    }
}

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use skillforge_core::corpus::{
    compute_stats, load_external_corpus, load_skill_dataset, save_skill_dataset, stratified_split, Story,
};
use skillforge_core::seqformat::{FormatKind, SequenceFormat, SpecialTokens, WhitespaceCounter};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::layout::{write_bytes, write_json, write_jsonl, Layout};
use crate::manifest::Manifest;

/// Salt for the external validation hold-out so it does not reuse the
/// split's random stream.
const EXTERNAL_SALT: u64 = 0x6578_7465_726e_616c;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrepareSummary {
    pub skill_stories: [usize; 3],
    pub skill_pairs: [usize; 3],
    pub external_passages: [usize; 2],
}

/// Holds out `fraction` of the passages (at least one when there are two or
/// more).
fn split_external(passages: Vec<Story>, fraction: f64, seed: u64) -> (Vec<Story>, Vec<Story>) {
    let n = passages.len();
    if n < 2 {
        return (passages, Vec::new());
    }
    let held = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ EXTERNAL_SALT));
    let mut is_val = vec![false; n];
    for &i in &order[..held] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, p) in passages.into_iter().enumerate() {
        if is_val[i] {
            val.push(p);
        } else {
            train.push(p);
        }
    }
    (train, val)
}

pub fn prepare(config: &ExperimentConfig) -> Result<PrepareSummary> {
    config.validate()?;
    config.validate_inputs()?;
    let root = config.output_dir()?.to_path_buf();
    let layout = Layout::new(&root);
    let skill_path = config.data.skill.clone().expect("validated");

    // Load everything before writing anything.
    let skill = load_skill_dataset(&skill_path)?;
    if skill.is_empty() {
        return Err(CliError::data(format!("{} holds no stories", skill_path.display())));
    }
    let mut external = Vec::new();
    for src in &config.data.external {
        let corpus = load_external_corpus(&src.path, src.format)?;
        info!(
            "{}: {} passages, {} answerable pairs",
            src.path.display(),
            corpus.passages.len(),
            corpus.pair_count()
        );
        external.extend(corpus.passages);
    }
    let split = stratified_split(&skill, &config.split_spec())?;
    let (ext_train, ext_val) = split_external(external, config.data.external_val_fraction, config.seed);

    let parts = [("train", &split.train), ("val", &split.val), ("test", &split.test)];
    for (name, ds) in parts {
        let path = layout.skill_split(name);
        crate::layout::create_parent(&path)?;
        save_skill_dataset(ds, &path)?;
    }
    write_jsonl(&layout.external_split("train"), &ext_train)?;
    write_jsonl(&layout.external_split("val"), &ext_val)?;

    // Encoded dumps are budgeted in whitespace tokens; training re-renders
    // with the backend's own tokenizer.
    let format = SequenceFormat::new(SpecialTokens::default()).map_err(|e| CliError::config(e.to_string()))?;
    let budget = config.train_config().budget();
    for kind in FormatKind::ALL {
        let mut sets: Vec<(String, &[Story])> = parts
            .iter()
            .map(|(n, ds)| (format!("skill_{n}"), ds.stories.as_slice()))
            .collect();
        if matches!(kind, FormatKind::Hta | FormatKind::OneStep) {
            sets.push(("external_train".into(), &ext_train));
            sets.push(("external_val".into(), &ext_val));
        }
        for (name, stories) in sets {
            let examples = format
                .build_training_set(stories, kind, &WhitespaceCounter, budget)
                .map_err(|e| CliError::data(format!("encoding {name} as {kind}: {e}")))?;
            write_jsonl(&layout.encoded(kind, &name), &examples)?;
        }
    }

    let stats_dir = layout.stats_dir();
    let mut all_stats = serde_json::Map::new();
    for (name, ds) in [("all", &skill), ("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let stats = compute_stats(ds);
        write_bytes(&stats_dir.join(format!("skill_{name}.csv")), stats.to_csv().as_bytes())?;
        all_stats.insert(name.into(), serde_json::to_value(&stats).expect("stats serialize"));
    }
    write_json(&stats_dir.join("stats.json"), &all_stats)?;

    let summary = PrepareSummary {
        skill_stories: [split.train.stories.len(), split.val.stories.len(), split.test.stories.len()],
        skill_pairs: [split.train.pair_count(), split.val.pair_count(), split.test.pair_count()],
        external_passages: [ext_train.len(), ext_val.len()],
    };

    let mut manifest = Manifest::load_or_new(&root, config.seed)?;
    manifest.record_input(&skill_path)?;
    for src in &config.data.external {
        manifest.record_input(&src.path)?;
    }
    for dir in [layout.data_dir(), layout.encoded_dir(), stats_dir] {
        manifest.record_tree(&root, &dir)?;
    }
    manifest.note("prepare", json!({ "split": config.split_spec(), "counts": summary, "encoded_budget": "whitespace tokens" }));
    manifest.save(&root)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passages(n: usize) -> Vec<Story> {
        (0..n)
            .map(|i| Story {
                id: format!("p{i}"),
                text: "t".into(),
                genre: None,
                pairs: vec![],
            })
            .collect()
    }

    #[test]
    fn external_holdout_sizes() {
        let (t, v) = split_external(passages(20), 0.1, 1);
        assert_eq!((t.len(), v.len()), (18, 2));
        let (t, v) = split_external(passages(3), 0.1, 1);
        assert_eq!((t.len(), v.len()), (2, 1));
        let (t, v) = split_external(passages(1), 0.1, 1);
        assert_eq!((t.len(), v.len()), (1, 0));
        assert_eq!(split_external(passages(20), 0.1, 5), split_external(passages(20), 0.1, 5));
    }
}

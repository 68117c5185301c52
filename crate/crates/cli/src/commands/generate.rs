use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use skillforge_core::corpus::{Skill, Story};
use skillforge_core::decoding::{generate, TerminatedBy};
use skillforge_core::seqformat::{FormatKind, ParsedGeneration};
use skillforge_modelkit::RecipeName;

use crate::commands::train::{format, load_checkpoint, Checkpoint};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::layout::{read_stories, write_jsonl, Layout};
use crate::manifest::Manifest;

/// Which skills to request per story.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkillSelection {
    One(Skill),
    /// Every skill.
    All,
    /// The skills annotated on the story's own pairs.
    Annotated,
}

impl FromStr for SkillSelection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(SkillSelection::All),
            "annotated" => Ok(SkillSelection::Annotated),
            _ => Skill::from_code(s).map(SkillSelection::One).map_err(|e| e.to_string()),
        }
    }
}

impl SkillSelection {
    fn skills(self, story: &Story) -> Vec<Skill> {
        match self {
            SkillSelection::One(s) => vec![s],
            SkillSelection::All => Skill::ALL.to_vec(),
            SkillSelection::Annotated => story.skills(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub story_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<Skill>,
    pub recipe: RecipeName,
    pub seed: u64,
    pub encoder: String,
    pub raw_text: String,
    pub parsed: ParsedGeneration,
    pub terminated_by: TerminatedBy,
}

impl GenerationRecord {
    /// First generated question, or empty.
    pub fn question(&self) -> &str {
        self.parsed.pairs.first().map_or("", |p| p.question.as_str())
    }
}

/// Sampling seed of one (story, skill) request.
pub fn generation_seed(base: u64, story_id: &str, skill: Option<Skill>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in story_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let k = skill.map_or(0, |s| s.index() as u64 + 1);
    base ^ h ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One record per (story, skill) when skills are selected, one per story
/// otherwise. Unskilled checkpoints record the selected skill as the
/// intended one without putting it in the prompt.
pub fn generate_records(
    checkpoint: &Checkpoint,
    stories: &[Story],
    selection: Option<SkillSelection>,
    config: &ExperimentConfig,
) -> Result<Vec<GenerationRecord>> {
    let kind = checkpoint.info.final_format;
    let recipe = checkpoint.info.recipe;
    match (kind, selection) {
        (FormatKind::Wta, None) => {
            return Err(CliError::config(format!(
                "{recipe} checkpoints are prompted with a skill token; pass --skill"
            )))
        }
        (FormatKind::Hta | FormatKind::OneStep, Some(_)) => {
            return Err(CliError::config(format!("{recipe} checkpoints take no skill token; drop --skill")))
        }
        _ => {}
    }
    let fmt = format().with_escaping(true);
    let mut records = Vec::new();
    for story in stories {
        let skills: Vec<Option<Skill>> = match selection {
            Some(sel) => sel.skills(story).into_iter().map(Some).collect(),
            None => vec![None],
        };
        for skill in skills {
            let encoder = fmt
                .render_input(story, kind, skill.filter(|_| kind.uses_skill_token()))
                .map_err(|e| CliError::data(format!("story {}: {e}", story.id)))?;
            let seed = generation_seed(config.seed, &story.id, skill);
            let result = generate(checkpoint.backend.as_ref(), &encoder, &config.sampler_config(seed))
                .map_err(|e| CliError::Training(format!("story {}: {e}", story.id)))?;
            records.push(GenerationRecord {
                story_id: story.id.clone(),
                skill,
                recipe,
                seed,
                parsed: fmt.parse_generation(&result.raw_text),
                encoder,
                raw_text: result.raw_text,
                terminated_by: result.terminated_by,
            });
        }
    }
    Ok(records)
}

#[derive(Clone, Debug, Default)]
pub struct GenerateRequest {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub skill: Option<SkillSelection>,
    pub output: Option<PathBuf>,
}

pub fn cmd_generate(config: &ExperimentConfig, request: &GenerateRequest) -> Result<(PathBuf, Vec<GenerationRecord>)> {
    config.validate()?;
    let root = config.output_dir.clone();
    let layout = root.as_ref().map(Layout::new);
    let need = |p: &Option<PathBuf>, default: fn(&Layout, RecipeName) -> PathBuf, what: &str| -> Result<PathBuf> {
        p.clone()
            .or_else(|| layout.as_ref().map(|l| default(l, config.recipe)))
            .ok_or_else(|| CliError::config(format!("no {what}; pass it or --out")))
    };
    let checkpoint_dir = need(&request.checkpoint, Layout::run_dir, "checkpoint")?;
    let input = need(&request.input, |l, _| l.skill_split("test"), "input stories")?;
    let output = need(&request.output, Layout::generations, "output path")?;
    let checkpoint = load_checkpoint(&checkpoint_dir)?;
    let stories = read_stories(&input)?;
    let records = generate_records(&checkpoint, &stories, request.skill, config)?;
    write_jsonl(&output, &records)?;
    if let Some(root) = &root {
        record_output(root, config.seed, &input, &output)?;
    }
    Ok((output, records))
}

fn record_output(root: &Path, seed: u64, input: &Path, output: &Path) -> Result<()> {
    let mut manifest = Manifest::load_or_new(root, seed)?;
    if !input.starts_with(root) {
        manifest.record_input(input)?;
    }
    manifest.record(root, output)?;
    manifest.save(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_story_and_skill() {
        let a = generation_seed(1, "s1", Some(Skill::Vocabulary));
        assert_ne!(a, generation_seed(1, "s1", Some(Skill::Predicting)));
        assert_ne!(a, generation_seed(1, "s2", Some(Skill::Vocabulary)));
        assert_ne!(a, generation_seed(2, "s1", Some(Skill::Vocabulary)));
        assert_eq!(a, generation_seed(1, "s1", Some(Skill::Vocabulary)));
    }

    #[test]
    fn selection_parses() {
        assert_eq!("all".parse::<SkillSelection>().unwrap(), SkillSelection::All);
        assert_eq!("VO".parse::<SkillSelection>().unwrap(), SkillSelection::One(Skill::Vocabulary));
        assert!("XX".parse::<SkillSelection>().is_err());
    }
}

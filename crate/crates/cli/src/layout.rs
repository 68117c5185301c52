//! Where every command reads and writes inside an experiment directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use skillforge_core::corpus::{load_skill_dataset, SkillDataset, Story};
use skillforge_core::seqformat::FormatKind;
use skillforge_modelkit::RecipeName;

use crate::error::{CliError, Result};

pub const SKILL_SPLITS: [&str; 3] = ["train", "val", "test"];
pub const EXTERNAL_SPLITS: [&str; 2] = ["train", "val"];

#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn skill_split(&self, split: &str) -> PathBuf {
        self.data_dir().join(format!("skill_{split}.jsonl"))
    }

    pub fn external_split(&self, split: &str) -> PathBuf {
        self.data_dir().join(format!("external_{split}.jsonl"))
    }

    pub fn encoded_dir(&self) -> PathBuf {
        self.root.join("encoded")
    }

    pub fn encoded(&self, kind: FormatKind, name: &str) -> PathBuf {
        self.encoded_dir().join(kind.as_str()).join(format!("{name}.jsonl"))
    }

    pub fn stats_dir(&self) -> PathBuf {
        self.root.join("stats")
    }

    pub fn run_dir(&self, recipe: RecipeName) -> PathBuf {
        self.root.join("runs").join(recipe.as_str())
    }

    pub fn generations(&self, recipe: RecipeName) -> PathBuf {
        self.root.join("generations").join(format!("{}.jsonl", recipe.as_str()))
    }

    pub fn eval_dir(&self, recipe: RecipeName) -> PathBuf {
        self.root.join("eval").join(recipe.as_str())
    }

    pub fn fewshot_dir(&self) -> PathBuf {
        self.root.join("fewshot")
    }
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value).expect("value serializes");
    json.push(b'\n');
    write_bytes(path, &json)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("record serializes");
        buf.write_all(b"\n").expect("write to vec");
    }
    write_bytes(path, &buf)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Stories with or without annotations.
pub fn read_stories(path: &Path) -> Result<Vec<Story>> {
    read_jsonl(path)
}

/// The splits written by `prepare`.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub skill_train: SkillDataset,
    pub skill_val: SkillDataset,
    pub skill_test: SkillDataset,
    pub external_train: Vec<Story>,
    pub external_val: Vec<Story>,
}

impl Prepared {
    pub fn load(layout: &Layout) -> Result<Prepared> {
        let skill = |s: &str| -> Result<SkillDataset> {
            let p = layout.skill_split(s);
            if !p.is_file() {
                return Err(CliError::data(format!(
                    "{} is missing; run `skillforge prepare` first",
                    p.display()
                )));
            }
            Ok(load_skill_dataset(&p)?)
        };
        let external = |s: &str| -> Result<Vec<Story>> {
            let p = layout.external_split(s);
            if p.is_file() {
                read_stories(&p)
            } else {
                Ok(Vec::new())
            }
        };
        Ok(Prepared {
            skill_train: skill("train")?,
            skill_val: skill("val")?,
            skill_test: skill("test")?,
            external_train: external("train")?,
            external_val: external("val")?,
        })
    }

    /// Texts the backend vocabulary is built from: every training and
    /// validation story, question and answer. Test stories are left out.
    pub fn vocabulary_texts(&self) -> Vec<&str> {
        let stories = self
            .skill_train
            .stories
            .iter()
            .chain(&self.skill_val.stories)
            .chain(&self.external_train)
            .chain(&self.external_val);
        let mut texts = Vec::new();
        for s in stories {
            texts.push(s.text.as_str());
            for p in &s.pairs {
                texts.push(p.question.as_str());
                texts.push(p.answer.as_str());
            }
        }
        texts
    }
}

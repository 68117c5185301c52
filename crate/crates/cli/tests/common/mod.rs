#![allow(dead_code)]

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skillforge_cli::ExperimentConfig;
use skillforge_core::corpus::save_skill_dataset;
use skillforge_core::synthetic::{
    general_passages, skill_corpus, write_commonsense_jsonl, write_extractive_json, SyntheticConfig,
};

pub struct Inputs {
    pub skill: PathBuf,
    pub extractive: PathBuf,
    pub commonsense: PathBuf,
}

/// Synthetic skill stories plus both external formats under `dir`.
pub fn write_inputs(dir: &Path, stories: usize, passages: usize, seed: u64) -> Inputs {
    fs::create_dir_all(dir).unwrap();
    let inputs = Inputs {
        skill: dir.join("skill.jsonl"),
        extractive: dir.join("extractive.json"),
        commonsense: dir.join("commonsense.jsonl"),
    };
    let ds = skill_corpus(&SyntheticConfig {
        stories,
        seed,
        ..SyntheticConfig::default()
    });
    save_skill_dataset(&ds, &inputs.skill).unwrap();
    let (x, c) = general_passages(passages, seed.wrapping_add(1000));
    write_extractive_json(&x, BufWriter::new(File::create(&inputs.extractive).unwrap())).unwrap();
    write_commonsense_jsonl(&c, BufWriter::new(File::create(&inputs.commonsense).unwrap())).unwrap();
    inputs
}

/// Config TOML for `inputs` with the given training overrides.
pub fn config_toml(inputs: &Inputs, seed: u64, train: &str) -> String {
    format!(
        r#"seed = {seed}

[data]
skill = "{}"
external = [
  {{ path = "{}", format = "extractive" }},
  {{ path = "{}", format = "commonsense" }},
]

[train]
learning_rate = 0.003
{train}
"#,
        inputs.skill.display(),
        inputs.extractive.display(),
        inputs.commonsense.display()
    )
}

pub fn config(inputs: &Inputs, seed: u64, out: &Path, train: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml(&config_toml(inputs, seed, train)).unwrap();
    c.output_dir = Some(out.to_path_buf());
    c
}

pub fn skillforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillforge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SKILLFORGE_BACKEND")
        .output()
        .unwrap()
}

pub fn ok(args: &[&str]) -> Output {
    let out = skillforge(args);
    assert!(
        out.status.success(),
        "skillforge {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

//! Writes a synthetic skill corpus, two external QA files and a demo config.
//!
//! ```text
//! cargo run -p skillforge-cli --example synth_corpus -- demo --stories 200
//! cargo run -p skillforge-cli --bin skillforge -- --config demo/config.toml prepare
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Parser;

use skillforge_core::corpus::save_skill_dataset;
use skillforge_core::synthetic::{
    general_passages, skill_corpus, write_commonsense_jsonl, write_extractive_json, SyntheticConfig,
};

#[derive(Parser)]
struct Args {
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    stories: usize,
    #[arg(long, default_value_t = 200)]
    passages: usize,
    #[arg(long, default_value_t = 13)]
    seed: u64,
}

const CONFIG: &str = r#"seed = 13
output_dir = "experiment"

[data]
skill = "skill.jsonl"
external = [
  { path = "extractive.json", format = "extractive" },
  { path = "commonsense.jsonl", format = "commonsense" },
]

[train]
learning_rate = 0.003
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    fs::create_dir_all(&args.out_dir)?;
    let skill = skill_corpus(&SyntheticConfig {
        stories: args.stories,
        seed: args.seed,
        ..SyntheticConfig::default()
    });
    save_skill_dataset(&skill, args.out_dir.join("skill.jsonl"))?;
    let (extractive, commonsense) = general_passages(args.passages, args.seed.wrapping_add(1));
    write_extractive_json(&extractive, BufWriter::new(File::create(args.out_dir.join("extractive.json"))?))?;
    write_commonsense_jsonl(&commonsense, BufWriter::new(File::create(args.out_dir.join("commonsense.jsonl"))?))?;
    let config = args.out_dir.join("config.toml");
    if !config.exists() {
        fs::write(&config, CONFIG)?;
    }
    println!(
        "{} stories, {} + {} passages in {}",
        skill.stories.len(),
        extractive.len(),
        commonsense.len(),
        args.out_dir.display()
    );
    Ok(())
}

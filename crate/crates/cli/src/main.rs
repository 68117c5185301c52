use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use skillforge_cli::commands::evaluate::{cmd_evaluate, EvaluateRequest, JudgmentSource};
use skillforge_cli::commands::fewshot::{fewshot, FewShotRequest};
use skillforge_cli::commands::generate::{cmd_generate, GenerateRequest, SkillSelection};
use skillforge_cli::commands::humaneval::{self, parse_model_input, DEFAULT_PACKET_SIZE};
use skillforge_cli::commands::prepare::prepare;
use skillforge_cli::commands::stats::stats;
use skillforge_cli::commands::train::{train, TrainRequest};
use skillforge_cli::config::{ExperimentConfig, ExternalSource};
use skillforge_cli::{CliError, Result};
use skillforge_core::corpus::{ExternalFormat, FewShotAmount};
use skillforge_modelkit::RecipeName;

#[derive(Parser)]
#[command(name = "skillforge", version, about = "Skill-controlled question generation experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Backend plug-in name.
    #[arg(long, global = true, env = "SKILLFORGE_BACKEND")]
    backend: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the skill data, hold out external validation passages, write
    /// encoded sequences and statistics.
    Prepare {
        /// Skill-annotated stories (JSONL).
        #[arg(long)]
        skill: Option<PathBuf>,
        /// External corpus as FORMAT=PATH; repeatable.
        #[arg(long, value_parser = parse_external)]
        external: Vec<ExternalSource>,
    },
    /// Per-skill counts of a skill dataset.
    Stats {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train one recipe.
    Train {
        #[arg(long)]
        recipe: Option<RecipeName>,
        /// Skip stages whose artifacts are complete.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        stop_after: Option<usize>,
        /// Train on a few-shot subsample (`1-per-skill` or a ratio).
        #[arg(long)]
        few_shot: Option<FewShotAmount>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Sample questions from a trained checkpoint.
    Generate {
        #[arg(long)]
        recipe: Option<RecipeName>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stories to prompt with (JSONL).
        #[arg(long)]
        input: Option<PathBuf>,
        /// A skill code, `all`, or `annotated`; required for skill-token
        /// checkpoints.
        #[arg(long)]
        skill: Option<SkillSelection>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score generations against reference questions.
    Evaluate {
        #[arg(long)]
        recipe: Option<RecipeName>,
        #[arg(long)]
        generations: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long)]
        eval_dir: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        judgments: JudgmentArgs,
    },
    /// Train, generate and score every few-shot point.
    Fewshot {
        #[arg(long, value_delimiter = ',')]
        amounts: Option<Vec<FewShotAmount>>,
        #[arg(long, value_delimiter = ',')]
        recipes: Option<Vec<RecipeName>>,
        #[command(flatten)]
        judgments: JudgmentArgs,
    },
    /// Write a blinded rating packet and its key.
    ExportHumaneval {
        /// Generations as MODEL=PATH; repeatable.
        #[arg(long = "generations", value_parser = parse_model_input, required = true)]
        generations: Vec<(String, PathBuf)>,
        #[arg(long)]
        stories: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PACKET_SIZE)]
        size: usize,
        #[arg(long)]
        packet_dir: Option<PathBuf>,
    },
    /// Average the ratings of a filled packet per model.
    ImportHumaneval {
        #[arg(long)]
        packet: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct JudgmentArgs {
    /// Skill judgments (JSONL) for skill-control scores.
    #[arg(long, conflicts_with = "template_judge")]
    judgments: Option<PathBuf>,
    /// Judge skills with the synthetic corpus's question templates.
    #[arg(long)]
    template_judge: bool,
}

impl JudgmentArgs {
    fn source(self) -> Option<JudgmentSource> {
        match (self.judgments, self.template_judge) {
            (Some(p), _) => Some(JudgmentSource::File(p)),
            (None, true) => Some(JudgmentSource::Templates),
            (None, false) => None,
        }
    }
}

fn parse_external(s: &str) -> std::result::Result<ExternalSource, String> {
    let (format, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected FORMAT=PATH, got {s:?}"))?;
    let format: ExternalFormat = format.parse().map_err(|e: skillforge_core::corpus::CorpusError| e.to_string())?;
    Ok(ExternalSource {
        path: PathBuf::from(path),
        format,
    })
}

/// A closed pipe (`| head`) is not an error.
fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn print_json<T: Serialize>(value: &T) {
    say(&serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.out.is_some() {
        config.output_dir = cli.out.clone();
    }
    if cli.backend.is_some() {
        config.backend = cli.backend.clone();
    }
    let mut set_recipe = |r: Option<RecipeName>| {
        if let Some(r) = r {
            config.recipe = r;
        }
    };
    match cli.command {
        Command::Prepare { skill, external } => {
            if skill.is_some() {
                config.data.skill = skill;
            }
            if !external.is_empty() {
                config.data.external = external;
            }
            print_json(&prepare(&config)?);
        }
        Command::Stats { input, csv } => {
            let input = input
                .or_else(|| config.data.skill.clone())
                .ok_or_else(|| CliError::config("no input; pass --input or set data.skill"))?;
            print_json(&stats(&input, csv.as_deref())?);
        }
        Command::Train {
            recipe,
            resume,
            stop_after,
            few_shot,
            run_dir,
        } => {
            set_recipe(recipe);
            let info = train(
                &config,
                &TrainRequest {
                    resume,
                    stop_after,
                    few_shot,
                    run_dir,
                },
            )?;
            print_json(&info);
        }
        Command::Generate {
            recipe,
            checkpoint,
            input,
            skill,
            output,
        } => {
            set_recipe(recipe);
            let (path, records) = cmd_generate(
                &config,
                &GenerateRequest {
                    checkpoint,
                    input,
                    skill,
                    output,
                },
            )?;
            say(&format!("{} records written to {}", records.len(), path.display()));
        }
        Command::Evaluate {
            recipe,
            generations,
            references,
            eval_dir,
            model,
            judgments,
        } => {
            set_recipe(recipe);
            let (_, output) = cmd_evaluate(
                &config,
                &EvaluateRequest {
                    generations,
                    references,
                    out_dir: eval_dir,
                    model,
                    judgments: judgments.source(),
                },
            )?;
            print_json(&output);
        }
        Command::Fewshot {
            amounts,
            recipes,
            judgments,
        } => {
            let rows = fewshot(
                &config,
                &FewShotRequest {
                    amounts,
                    recipes,
                    judgments: judgments.source(),
                },
            )?;
            print_json(&rows);
        }
        Command::ExportHumaneval {
            generations,
            stories,
            size,
            packet_dir,
        } => {
            let root = config.output_dir.clone();
            let stories = stories
                .or_else(|| root.as_ref().map(|r| r.join("data").join("skill_test.jsonl")))
                .ok_or_else(|| CliError::config("no stories; pass --stories or --out"))?;
            let dir = packet_dir
                .or_else(|| root.as_ref().map(|r| r.join("humaneval")))
                .ok_or_else(|| CliError::config("no packet directory; pass --packet-dir or --out"))?;
            let n = humaneval::export(&generations, &stories, size, config.seed, &dir)?;
            say(&format!("{n} rows written to {}", dir.display()));
        }
        Command::ImportHumaneval { packet, key, output } => {
            print_json(&humaneval::import(&packet, &key, output.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

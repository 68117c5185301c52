//! The experiment config file (TOML).
//!
//! ```toml
//! seed = 13
//! recipe = "HTA_WTA"
//! output_dir = "runs/demo"
//!
//! [data]
//! skill = "data/skill.jsonl"
//! external = [{ path = "data/extractive.json", format = "extractive" }]
//!
//! [train]
//! learning_rate = 0.003
//! ```
//!
//! Relative paths resolve against the config file's directory. The global
//! seed overrides every per-section seed.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use skillforge_core::corpus::{ExternalFormat, FewShotAmount, SplitSpec};
use skillforge_core::decoding::SamplerConfig;
use skillforge_core::metrics::ScorerSpec;
use skillforge_modelkit::{RecipeName, TinyConfig, TrainConfig};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSource {
    pub path: PathBuf,
    pub format: ExternalFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Skill-annotated stories (JSONL).
    pub skill: Option<PathBuf>,
    pub external: Vec<ExternalSource>,
    /// Share of external passages held out for stage-one validation.
    pub external_val_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            skill: None,
            external: Vec::new(),
            external_val_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let d = SplitSpec::default();
        SplitConfig {
            val_fraction: d.val_fraction,
            test_fraction: d.test_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub top_p: f64,
    pub max_new_tokens: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            top_p: d.top_p,
            max_new_tokens: d.max_new_tokens,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub scorer: ScorerSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FewShotConfig {
    pub amounts: Vec<FewShotAmount>,
    pub recipes: Vec<RecipeName>,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            amounts: FewShotAmount::standard_grid(),
            recipes: vec![RecipeName::HtaWta, RecipeName::T5Wta],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub recipe: RecipeName,
    pub output_dir: Option<PathBuf>,
    /// Backend plug-in; falls back to `SKILLFORGE_BACKEND`, then `tiny`.
    pub backend: Option<String>,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub model: TinyConfig,
    pub sampler: SamplerSection,
    pub metrics: MetricsConfig,
    pub fewshot: FewShotConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: DEFAULT_SEED,
            recipe: RecipeName::HtaWta,
            output_dir: None,
            backend: None,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            model: TinyConfig::default(),
            sampler: SamplerSection::default(),
            metrics: MetricsConfig::default(),
            fewshot: FewShotConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Reads and parses `path`, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = config.data.skill.as_mut() {
            resolve(base, p);
        }
        for src in &mut config.data.external {
            resolve(base, &mut src.path);
        }
        if let Some(p) = config.output_dir.as_mut() {
            resolve(base, p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.split_spec()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.train_config()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.model.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.sampler_config(0)
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        let f = self.data.external_val_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::config(format!("data.external_val_fraction {f} outside (0, 1)")));
        }
        for a in &self.fewshot.amounts {
            a.validate().map_err(|e| CliError::config(e.to_string()))?;
        }
        Ok(())
    }

    /// Checks that every input path exists.
    pub fn validate_inputs(&self) -> Result<()> {
        let skill = self
            .data
            .skill
            .as_ref()
            .ok_or_else(|| CliError::config("data.skill is not set"))?;
        let mut paths = vec![skill];
        paths.extend(self.data.external.iter().map(|s| &s.path));
        for p in paths {
            if !p.is_file() {
                return Err(CliError::config(format!("input {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| CliError::config("no output directory; set output_dir or pass --out"))
    }

    pub fn backend_name(&self) -> String {
        self.backend
            .clone()
            .unwrap_or_else(skillforge_modelkit::backend_name_from_env)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            val_fraction: self.split.val_fraction,
            test_fraction: self.split.test_fraction,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        if self.train.seed != TrainConfig::default().seed && self.train.seed != self.seed {
            warn!("train.seed is ignored; the global seed {} applies", self.seed);
        }
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn model_config(&self) -> TinyConfig {
        TinyConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            top_p: self.sampler.top_p,
            max_new_tokens: self.sampler.max_new_tokens,
            seed,
            eos_id: None,
        }
    }
}

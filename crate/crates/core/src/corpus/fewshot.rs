use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Provenance, Skill, SkillDataset};
use super::CorpusError;

/// How much of the skill data a few-shot run keeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FewShotAmount {
    /// `k` pairs of every skill.
    PerSkill(usize),
    /// A fraction in (0, 1] of every skill's pairs.
    Ratio(f64),
}

impl FewShotAmount {
    /// The sweep grid: one pair per skill, then 10%, 30%, 50%, 75% and all.
    pub fn standard_grid() -> Vec<FewShotAmount> {
        vec![
            FewShotAmount::PerSkill(1),
            FewShotAmount::Ratio(0.1),
            FewShotAmount::Ratio(0.3),
            FewShotAmount::Ratio(0.5),
            FewShotAmount::Ratio(0.75),
            FewShotAmount::Ratio(1.0),
        ]
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        match *self {
            FewShotAmount::PerSkill(0) => Err(CorpusError::InvalidAmount(
                "per-skill count must be at least 1".into(),
            )),
            FewShotAmount::Ratio(r) if !(r > 0.0 && r <= 1.0) => Err(CorpusError::InvalidAmount(
                format!("ratio {r} outside (0, 1]"),
            )),
            _ => Ok(()),
        }
    }

    /// Sort key: per-skill amounts precede every ratio.
    pub fn sort_key(&self) -> (u8, f64) {
        match *self {
            FewShotAmount::PerSkill(k) => (0, k as f64),
            FewShotAmount::Ratio(r) => (1, r),
        }
    }
}

impl fmt::Display for FewShotAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FewShotAmount::PerSkill(k) => write!(f, "{k}-per-skill"),
            FewShotAmount::Ratio(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for FewShotAmount {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let amount = if let Some(k) = s.strip_suffix("-per-skill") {
            FewShotAmount::PerSkill(
                k.parse()
                    .map_err(|_| CorpusError::InvalidAmount(s.to_string()))?,
            )
        } else {
            FewShotAmount::Ratio(
                s.parse()
                    .map_err(|_| CorpusError::InvalidAmount(s.to_string()))?,
            )
        };
        amount.validate()?;
        Ok(amount)
    }
}

impl Serialize for FewShotAmount {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FewShotAmount {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Keeps a per-skill stratified subset of the pairs. Stories without any
/// selected pair are dropped; everything else keeps corpus order.
pub fn subsample_few_shot(
    train: &SkillDataset,
    amount: FewShotAmount,
    seed: u64,
) -> Result<SkillDataset, CorpusError> {
    amount.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<Vec<bool>> = train
        .stories
        .iter()
        .map(|s| vec![false; s.pairs.len()])
        .collect();
    for skill in Skill::ALL {
        let mut members: Vec<(usize, usize)> = train
            .stories
            .iter()
            .enumerate()
            .flat_map(|(si, s)| {
                s.pairs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.skill == Some(skill))
                    .map(move |(pi, _)| (si, pi))
            })
            .collect();
        if members.is_empty() {
            continue;
        }
        let take = match amount {
            FewShotAmount::PerSkill(k) => k.min(members.len()),
            FewShotAmount::Ratio(r) => ((r * members.len() as f64).round() as usize)
                .clamp(1, members.len()),
        };
        members.shuffle(&mut rng);
        for &(si, pi) in &members[..take] {
            keep[si][pi] = true;
        }
    }
    let stories = train
        .stories
        .iter()
        .zip(&keep)
        .filter(|(_, k)| k.iter().any(|&x| x))
        .map(|(s, k)| {
            let mut story = s.clone();
            story.pairs = s
                .pairs
                .iter()
                .zip(k)
                .filter(|(_, &x)| x)
                .map(|(p, _)| p.clone())
                .collect();
            story
        })
        .collect();
    Ok(SkillDataset {
        stories,
        provenance: Provenance {
            source: train.provenance.source.clone(),
            format: format!("{}+fewshot:{amount}", train.provenance.format),
        },
    })
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::corpus::Skill;

/// A rater's skill label for a question generated for `intended`.
/// `judged = None` means no skill could be assigned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillJudgment {
    pub question_id: String,
    pub intended: Skill,
    #[serde(with = "judged_skill")]
    pub judged: Option<Skill>,
}

mod judged_skill {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::corpus::Skill;

    pub fn serialize<S: Serializer>(v: &Option<Skill>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.map(Skill::code).unwrap_or("NONE"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Skill>, D::Error> {
        let code = String::deserialize(d)?;
        if code == "NONE" {
            Ok(None)
        } else {
            Skill::from_code(&code).map(Some).map_err(serde::de::Error::custom)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillControlReport {
    pub accuracy: f64,
    pub n: usize,
    /// Skills that were intended or judged at least once.
    pub per_skill: BTreeMap<Skill, PrfScores>,
    /// `confusion[intended][judged]`; column 9 counts NONE.
    pub confusion: Vec<Vec<usize>>,
}

pub fn skill_control_scores(judgments: &[SkillJudgment]) -> Result<SkillControlReport, MetricError> {
    if judgments.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut confusion = vec![vec![0usize; 10]; 9];
    for j in judgments {
        let col = j.judged.map(Skill::index).unwrap_or(9);
        confusion[j.intended.index()][col] += 1;
    }
    let correct: usize = (0..9).map(|k| confusion[k][k]).sum();
    let mut per_skill = BTreeMap::new();
    for skill in Skill::ALL {
        let k = skill.index();
        let tp = confusion[k][k];
        let support: usize = confusion[k].iter().sum();
        let predicted: usize = (0..9).map(|i| confusion[i][k]).sum();
        if support == 0 && predicted == 0 {
            continue;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_skill.insert(
            skill,
            PrfScores {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    Ok(SkillControlReport {
        accuracy: correct as f64 / judgments.len() as f64,
        n: judgments.len(),
        per_skill,
        confusion,
    })
}

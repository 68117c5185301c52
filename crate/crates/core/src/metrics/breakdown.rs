use std::collections::BTreeMap;

use super::{MetricError, MetricReport, ScoredPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    QuestionType,
    Skill,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::QuestionType => "qtype",
            Dimension::Skill => "skill",
        }
    }

    fn key(self, pair: &ScoredPair) -> Option<String> {
        match self {
            Dimension::QuestionType => pair.qtype.map(|q| q.as_str().to_string()),
            Dimension::Skill => pair.skill.map(|s| s.code().to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Breakdown {
    pub groups: BTreeMap<String, MetricReport>,
    /// Pairs without the grouping field.
    pub excluded: usize,
}

/// Scores every group independently. Group semantic scores are means of the
/// corpus run's per-pair scores, so size-weighted group means reconstruct
/// the corpus mean. Corpus BLEU has no such identity.
pub fn breakdown(
    pairs: &[ScoredPair],
    semantic: Option<&[f64]>,
    dimension: Dimension,
) -> Result<Breakdown, MetricError> {
    if let Some(s) = semantic {
        if s.len() != pairs.len() {
            return Err(MetricError::Invalid(format!(
                "{} semantic scores for {} pairs",
                s.len(),
                pairs.len()
            )));
        }
    }
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut excluded = 0;
    for (i, pair) in pairs.iter().enumerate() {
        match dimension.key(pair) {
            Some(k) => members.entry(k).or_default().push(i),
            None => excluded += 1,
        }
    }
    let mut groups = BTreeMap::new();
    for (key, idx) in members {
        let group: Vec<ScoredPair> = idx.iter().map(|&i| pairs[i].clone()).collect();
        let scores: Option<Vec<f64>> = semantic.map(|s| idx.iter().map(|&i| s[i]).collect());
        groups.insert(key, MetricReport::score(&group, scores.as_deref())?);
    }
    Ok(Breakdown { groups, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QuestionType;

    #[test]
    fn single_group_equals_corpus() {
        let pairs: Vec<ScoredPair> = ["a b c", "d e f g"]
            .iter()
            .map(|t| {
                let mut p = ScoredPair::new(*t, vec!["a b d".into()]);
                p.qtype = Some(QuestionType::Literal);
                p
            })
            .collect();
        let semantic = [0.2, 0.6];
        let corpus = MetricReport::score(&pairs, Some(&semantic)).unwrap();
        let b = breakdown(&pairs, Some(&semantic), Dimension::QuestionType).unwrap();
        assert_eq!(b.excluded, 0);
        assert_eq!(b.groups.len(), 1);
        assert_eq!(b.groups["literal"], corpus);
    }

    #[test]
    fn missing_field_is_excluded() {
        let pairs = vec![ScoredPair::new("x", vec!["x".into()])];
        let b = breakdown(&pairs, None, Dimension::Skill).unwrap();
        assert_eq!(b.excluded, 1);
        assert!(b.groups.is_empty());
    }
}

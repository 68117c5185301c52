use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::{QuestionType, Skill, SkillDataset};
use crate::text::punct_token_count;

/// One row of the dataset statistics table. Token counts use
/// punctuation-detached whitespace tokens.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SkillStats {
    pub stories: usize,
    pub pairs: usize,
    pub avg_story_tokens: f64,
    pub max_story_tokens: usize,
    pub avg_question_tokens: f64,
    pub max_question_tokens: usize,
    pub avg_answer_tokens: f64,
    pub max_answer_tokens: usize,
    pub literal: usize,
    pub inferential: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_skill: BTreeMap<Skill, SkillStats>,
    pub totals: SkillStats,
}

#[derive(Default)]
struct Accumulator {
    stories: usize,
    story_tokens: usize,
    max_story: usize,
    pairs: usize,
    question_tokens: usize,
    max_question: usize,
    answer_tokens: usize,
    max_answer: usize,
    literal: usize,
    inferential: usize,
}

impl Accumulator {
    fn add_story(&mut self, tokens: usize) {
        self.stories += 1;
        self.story_tokens += tokens;
        self.max_story = self.max_story.max(tokens);
    }

    fn add_pair(&mut self, q: usize, a: usize, qtype: Option<QuestionType>) {
        self.pairs += 1;
        self.question_tokens += q;
        self.answer_tokens += a;
        self.max_question = self.max_question.max(q);
        self.max_answer = self.max_answer.max(a);
        match qtype {
            Some(QuestionType::Literal) => self.literal += 1,
            Some(QuestionType::Inferential) => self.inferential += 1,
            None => {}
        }
    }

    fn finish(&self) -> SkillStats {
        let avg = |sum: usize, n: usize| if n == 0 { 0.0 } else { sum as f64 / n as f64 };
        SkillStats {
            stories: self.stories,
            pairs: self.pairs,
            avg_story_tokens: avg(self.story_tokens, self.stories),
            max_story_tokens: self.max_story,
            avg_question_tokens: avg(self.question_tokens, self.pairs),
            max_question_tokens: self.max_question,
            avg_answer_tokens: avg(self.answer_tokens, self.pairs),
            max_answer_tokens: self.max_answer,
            literal: self.literal,
            inferential: self.inferential,
        }
    }
}

pub fn compute_stats(dataset: &SkillDataset) -> CorpusStats {
    let mut per_skill: [Accumulator; 9] = Default::default();
    let mut totals = Accumulator::default();
    for story in &dataset.stories {
        let story_tokens = punct_token_count(&story.text);
        totals.add_story(story_tokens);
        for skill in story.skills() {
            per_skill[skill.index()].add_story(story_tokens);
        }
        for pair in &story.pairs {
            let q = punct_token_count(&pair.question);
            let a = punct_token_count(&pair.answer);
            totals.add_pair(q, a, pair.qtype);
            if let Some(skill) = pair.skill {
                per_skill[skill.index()].add_pair(q, a, pair.qtype);
            }
        }
    }
    CorpusStats {
        per_skill: Skill::ALL
            .iter()
            .map(|s| (*s, per_skill[s.index()].finish()))
            .collect(),
        totals: totals.finish(),
    }
}

impl CorpusStats {
    /// CSV with one row per skill plus a `TOTAL` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "skill,stories,pairs,avg_story_tokens,max_story_tokens,avg_question_tokens,\
             max_question_tokens,avg_answer_tokens,max_answer_tokens,literal,inferential\n",
        );
        let rows = self
            .per_skill
            .iter()
            .map(|(s, st)| (s.code(), st))
            .chain(std::iter::once(("TOTAL", &self.totals)));
        for (name, s) in rows {
            writeln!(
                out,
                "{name},{},{},{:.2},{},{:.2},{},{:.2},{},{},{}",
                s.stories,
                s.pairs,
                s.avg_story_tokens,
                s.max_story_tokens,
                s.avg_question_tokens,
                s.max_question_tokens,
                s.avg_answer_tokens,
                s.max_answer_tokens,
                s.literal,
                s.inferential
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Provenance, QaPair, Story};

    #[test]
    fn hand_counted_row() {
        let ds = SkillDataset::new(
            vec![Story {
                id: "s".into(),
                text: "a b c".into(),
                genre: None,
                pairs: vec![QaPair {
                    id: "p".into(),
                    question: "what is a ?".into(),
                    answer: "b".into(),
                    skill: Some(Skill::CloseReading),
                    qtype: Some(QuestionType::Literal),
                }],
            }],
            Provenance::default(),
        )
        .unwrap();
        let stats = compute_stats(&ds);
        let cr = &stats.per_skill[&Skill::CloseReading];
        assert_eq!(cr.stories, 1);
        assert_eq!(cr.pairs, 1);
        assert_eq!(cr.avg_story_tokens, 3.0);
        assert_eq!(cr.avg_question_tokens, 4.0);
        assert_eq!(cr.avg_answer_tokens, 1.0);
        assert_eq!((cr.literal, cr.inferential), (1, 0));
        assert_eq!(stats.per_skill[&Skill::Vocabulary], SkillStats::default());
        assert!(stats.to_csv().contains("CR,1,1,3.00,3,4.00,4,1.00,1,1,0"));
    }

    #[test]
    fn empty_dataset_is_zeroed() {
        let stats = compute_stats(&SkillDataset::default());
        assert_eq!(stats.totals, SkillStats::default());
        assert_eq!(stats.per_skill.len(), 9);
    }
}

//! A small template grammar that produces skill-annotated stories with
//! deterministic, skill-specific questions, plus general QA passages in the
//! two public external formats.
//!
//! Text is pre-tokenized (punctuation separated by spaces, lowercase except
//! names) so that a word-level vocabulary covers it exactly.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::corpus::{Provenance, QaPair, QuestionType, Skill, SkillDataset, Story};

const NAMES: [&str; 12] = [
    "Mia", "Leo", "Ava", "Sam", "Zoe", "Max", "Ivy", "Ben", "Eli", "Ada", "Kai", "Nia",
];
const PLACES: [&str; 10] = [
    "forest", "river", "garden", "market", "beach", "farm", "castle", "library", "meadow", "harbor",
];
const OBJECTS: [&str; 10] = [
    "kite", "box", "hat", "ball", "key", "shell", "lamp", "book", "drum", "cup",
];
const COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "purple", "orange", "white", "black"];
const FEELINGS: [&str; 8] = [
    "happy", "proud", "excited", "calm", "curious", "surprised", "glad", "hopeful",
];
const WEATHER: [&str; 5] = ["sunny", "rainy", "windy", "cold", "foggy"];
const VERBS: [&str; 8] = ["play", "share", "paint", "hide", "fix", "show", "clean", "keep"];
const SIMILES: [&str; 6] = ["feather", "leaf", "cloud", "bubble", "petal", "whisper"];
/// (word used in the story, its synonym).
const SYNONYMS: [(&str, &str); 8] = [
    ("tiny", "small"),
    ("huge", "big"),
    ("shiny", "bright"),
    ("ancient", "old"),
    ("gentle", "soft"),
    ("rapid", "fast"),
    ("silent", "quiet"),
    ("damp", "wet"),
];

/// Slot marker in question templates.
pub const SLOT: &str = "_";

/// The fixed question template of each skill; `_` marks a one-token slot.
pub fn question_template(skill: Skill) -> &'static str {
    match skill {
        Skill::BasicStoryElements => "who is the main character ?",
        Skill::CharacterTraits => "how did _ feel ?",
        Skill::CloseReading => "where did _ go ?",
        Skill::FigurativeLanguage => "what does as light as a _ mean ?",
        Skill::Inferring => "why did _ feel _ ?",
        Skill::Predicting => "what will _ do next with the _ ?",
        Skill::Summarizing => "what happened in the story ?",
        Skill::Visualizing => "what color was the _ ?",
        Skill::Vocabulary => "which word means the same as _ ?",
    }
}

pub fn question_type(skill: Skill) -> QuestionType {
    match skill {
        Skill::FigurativeLanguage | Skill::Inferring | Skill::Predicting | Skill::Vocabulary => {
            QuestionType::Inferential
        }
        _ => QuestionType::Literal,
    }
}

fn matches_template(question: &[&str], template: &str) -> bool {
    let t: Vec<&str> = template.split_whitespace().collect();
    t.len() == question.len() && t.iter().zip(question).all(|(a, b)| *a == SLOT || a == b)
}

/// The skill whose template the question instantiates, if any. Slots accept
/// any single token.
pub fn classify_question(question: &str) -> Option<Skill> {
    let tokens: Vec<&str> = question.split_whitespace().collect();
    Skill::ALL
        .iter()
        .copied()
        .find(|&s| matches_template(&tokens, question_template(s)))
}

/// One sampled story world.
#[derive(Clone, Debug)]
struct Scene {
    name: &'static str,
    home: &'static str,
    destination: &'static str,
    object: &'static str,
    color: &'static str,
    feeling: &'static str,
    weather: &'static str,
    verb: &'static str,
    simile: &'static str,
    word: &'static str,
    synonym: &'static str,
}

impl Scene {
    fn sample<R: Rng>(rng: &mut R) -> Scene {
        let places: Vec<&&str> = PLACES.choose_multiple(rng, 2).collect();
        let (word, synonym) = *SYNONYMS.choose(rng).unwrap();
        Scene {
            name: NAMES.choose(rng).unwrap(),
            home: places[0],
            destination: places[1],
            object: OBJECTS.choose(rng).unwrap(),
            color: COLORS.choose(rng).unwrap(),
            feeling: FEELINGS.choose(rng).unwrap(),
            weather: WEATHER.choose(rng).unwrap(),
            verb: VERBS.choose(rng).unwrap(),
            simile: SIMILES.choose(rng).unwrap(),
            word,
            synonym,
        }
    }

    fn text(&self) -> String {
        let s = self;
        format!(
            "{n} lived near the {h} . one {w} morning {n} found a {c} {o} . \
             the {o} was {wd} and as light as a {sim} . {n} felt {f} because the {o} was {wd} . \
             later {n} went to the {d} to {v} it .",
            n = s.name,
            h = s.home,
            w = s.weather,
            c = s.color,
            o = s.object,
            wd = s.word,
            sim = s.simile,
            f = s.feeling,
            d = s.destination,
            v = s.verb,
        )
    }

    fn qa(&self, skill: Skill) -> (String, String) {
        let s = self;
        match skill {
            Skill::BasicStoryElements => (question_template(skill).into(), s.name.into()),
            Skill::CharacterTraits => (format!("how did {} feel ?", s.name), s.feeling.into()),
            Skill::CloseReading => (format!("where did {} go ?", s.name), format!("the {}", s.destination)),
            Skill::FigurativeLanguage => (
                format!("what does as light as a {} mean ?", s.simile),
                "very light".into(),
            ),
            Skill::Inferring => (
                format!("why did {} feel {} ?", s.name, s.feeling),
                format!("the {} was {}", s.object, s.word),
            ),
            Skill::Predicting => (
                format!("what will {} do next with the {} ?", s.name, s.object),
                format!("{} it at the {}", s.verb, s.destination),
            ),
            Skill::Summarizing => (
                question_template(skill).into(),
                format!("{} found a {} {}", s.name, s.color, s.object),
            ),
            Skill::Visualizing => (format!("what color was the {} ?", s.object), s.color.into()),
            Skill::Vocabulary => (format!("which word means the same as {} ?", s.word), s.synonym.into()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub stories: usize,
    /// Inclusive bounds on the number of distinct skills per story.
    pub min_skills: usize,
    pub max_skills: usize,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            stories: 200,
            min_skills: 4,
            max_skills: 9,
            seed: 13,
            id_prefix: "syn".into(),
        }
    }
}

/// Skill-annotated stories; each story asks one question for each skill in
/// a random subset of the nine.
pub fn skill_corpus(config: &SyntheticConfig) -> SkillDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lo = config.min_skills.clamp(1, 9);
    let hi = config.max_skills.clamp(lo, 9);
    let stories = (0..config.stories)
        .map(|i| {
            let scene = Scene::sample(&mut rng);
            let k = rng.gen_range(lo..=hi);
            let mut skills: Vec<Skill> = Skill::ALL.choose_multiple(&mut rng, k).copied().collect();
            skills.sort();
            let id = format!("{}{i:04}", config.id_prefix);
            let pairs = skills
                .into_iter()
                .map(|skill| {
                    let (question, answer) = scene.qa(skill);
                    QaPair {
                        id: format!("{id}-{}", skill.code()),
                        question,
                        answer,
                        skill: Some(skill),
                        qtype: Some(question_type(skill)),
                    }
                })
                .collect();
            Story {
                id,
                text: scene.text(),
                genre: Some("synthetic".into()),
                pairs,
            }
        })
        .collect();
    SkillDataset {
        stories,
        provenance: Provenance {
            source: None,
            format: "synthetic".into(),
        },
    }
}

/// Literal skills get extractive passages, the rest commonsense ones.
fn is_extractive(skill: Skill) -> bool {
    question_type(skill) == QuestionType::Literal
}

/// Unlabelled general-QA passages drawn from the same grammar:
/// `(extractive, commonsense)`.
pub fn general_passages(count: usize, seed: u64) -> (Vec<Story>, Vec<Story>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extractive = Vec::with_capacity(count);
    let mut commonsense = Vec::with_capacity(count);
    for i in 0..count {
        let scene = Scene::sample(&mut rng);
        for (out, want, tag) in [(&mut extractive, true, "x"), (&mut commonsense, false, "c")] {
            let id = format!("{tag}{i:04}");
            let pairs = Skill::ALL
                .iter()
                .filter(|&&s| is_extractive(s) == want)
                .map(|&s| {
                    let (question, answer) = scene.qa(s);
                    QaPair {
                        id: format!("{id}-{}", s.code()),
                        question,
                        answer,
                        skill: None,
                        qtype: None,
                    }
                })
                .collect();
            out.push(Story {
                id,
                text: scene.text(),
                genre: None,
                pairs,
            });
        }
    }
    (extractive, commonsense)
}

/// Writes passages as an extractive-format JSON file with character offsets.
/// Answers not found in the passage are written as unanswerable items.
pub fn write_extractive_json<W: Write>(passages: &[Story], out: W) -> serde_json::Result<()> {
    let paragraphs: Vec<_> = passages
        .iter()
        .map(|p| {
            let qas: Vec<_> = p
                .pairs
                .iter()
                .map(|q| match p.text.find(&q.answer) {
                    Some(byte) => json!({
                        "id": q.id,
                        "question": q.question,
                        "answers": [{"text": q.answer, "answer_start": p.text[..byte].chars().count()}],
                        "is_impossible": false,
                    }),
                    None => json!({
                        "id": q.id,
                        "question": q.question,
                        "answers": [],
                        "is_impossible": true,
                    }),
                })
                .collect();
            json!({"context": p.text, "qas": qas})
        })
        .collect();
    serde_json::to_writer(out, &json!({"version": "synthetic", "data": [{"title": "synthetic", "paragraphs": paragraphs}]}))
}

/// Writes passages as commonsense-format JSONL, one question per line.
pub fn write_commonsense_jsonl<W: Write>(passages: &[Story], mut out: W) -> std::io::Result<()> {
    for p in passages {
        for q in &p.pairs {
            let record = json!({"id": q.id, "context": p.text, "question": q.question, "answer": q.answer});
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_generated_question_classifies_to_its_skill() {
        let ds = skill_corpus(&SyntheticConfig::default());
        assert_eq!(ds.stories.len(), 200);
        ds.validate().unwrap();
        for (_, pair) in ds.pairs() {
            assert_eq!(classify_question(&pair.question), pair.skill);
        }
        for story in &ds.stories {
            assert!((4..=9).contains(&story.pairs.len()));
        }
    }

    #[test]
    fn templates_are_mutually_exclusive() {
        for a in Skill::ALL {
            let filled = question_template(a).replace(SLOT, "zzz");
            assert_eq!(classify_question(&filled), Some(a));
        }
        assert_eq!(classify_question("what is this ?"), None);
    }

    #[test]
    fn same_seed_same_corpus() {
        let c = SyntheticConfig::default();
        assert_eq!(skill_corpus(&c), skill_corpus(&c));
    }

    #[test]
    fn extractive_answers_are_spans() {
        let (ext, com) = general_passages(20, 1);
        assert_eq!(ext.len(), 20);
        for p in &ext {
            for q in &p.pairs {
                assert!(p.text.contains(&q.answer), "{} not in {}", q.answer, p.text);
            }
        }
        assert!(com.iter().all(|p| p.pairs.len() == 4));
    }
}

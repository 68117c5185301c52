use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use super::model::{validate_story, Provenance, QaPair, QuestionType, Skill, SkillDataset, Story};
use super::CorpusError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    id: String,
    question: String,
    answer: String,
    skill: String,
    qtype: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStory {
    id: String,
    text: String,
    #[serde(default)]
    genre: Option<String>,
    pairs: Vec<RawPair>,
}

fn parse_line(line_no: usize, line: &str) -> Result<Story, CorpusError> {
    let raw: RawStory = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    let mut pairs = Vec::with_capacity(raw.pairs.len());
    for p in raw.pairs {
        let skill = Skill::from_code(&p.skill).map_err(|_| CorpusError::UnknownSkill {
            code: p.skill.clone(),
            line: Some(line_no),
        })?;
        let qtype: QuestionType = p.qtype.parse().map_err(|_| CorpusError::Malformed {
            line: line_no,
            message: format!("unknown qtype {:?}", p.qtype),
        })?;
        pairs.push(QaPair {
            id: p.id,
            question: p.question,
            answer: p.answer,
            skill: Some(skill),
            qtype: Some(qtype),
        });
    }
    let story = Story {
        id: raw.id,
        text: raw.text,
        genre: raw.genre,
        pairs,
    };
    validate_story(&story).map_err(|e| CorpusError::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(story)
}

/// Parses JSON Lines content, one story per non-blank line.
pub fn parse_skill_dataset(content: &str, provenance: Provenance) -> Result<SkillDataset, CorpusError> {
    let lines: Vec<(usize, &str)> = content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    // Parallel parse; collecting into a Result keeps line order and reports
    // the first failing line.
    let parsed: Vec<Result<Story, CorpusError>> = lines
        .par_iter()
        .map(|(no, line)| parse_line(*no, line))
        .collect();
    let mut stories = Vec::with_capacity(parsed.len());
    for story in parsed {
        stories.push(story?);
    }
    let mut seen = HashSet::new();
    for story in &stories {
        if !seen.insert(story.id.as_str()) {
            return Err(CorpusError::DuplicateStoryId(story.id.clone()));
        }
    }
    Ok(SkillDataset {
        stories,
        provenance,
    })
}

pub fn load_skill_dataset(path: impl AsRef<Path>) -> Result<SkillDataset, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_skill_dataset(
        &content,
        Provenance {
            source: Some(path.to_path_buf()),
            format: "skill-jsonl".into(),
        },
    )
}

/// Writes one JSON object per story, newline terminated.
pub fn write_skill_dataset<W: Write>(dataset: &SkillDataset, mut out: W) -> std::io::Result<()> {
    for story in &dataset.stories {
        serde_json::to_writer(&mut out, story)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_skill_dataset(dataset: &SkillDataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_skill_dataset(dataset, &mut buf).map_err(|e| CorpusError::io(path, e))?;
    fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"{"id":"s1","text":"abc","pairs":[{"id":"p1","question":"what?","answer":"abc","skill":"CR","qtype":"literal"}]}"#;

    #[test]
    fn minimal_record() {
        let ds = parse_skill_dataset(ONE, Provenance::default()).unwrap();
        assert_eq!(ds.stories.len(), 1);
        assert_eq!(ds.pair_count(), 1);
        assert_eq!(ds.stories[0].pairs[0].skill, Some(Skill::CloseReading));
    }

    #[test]
    fn unknown_skill_names_code_and_line() {
        let bad = ONE.replace("\"CR\"", "\"XX\"");
        let content = format!("{ONE}\n{}", bad.replace("s1", "s2"));
        match parse_skill_dataset(&content, Provenance::default()) {
            Err(CorpusError::UnknownSkill { code, line }) => {
                assert_eq!(code, "XX");
                assert_eq!(line, Some(2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_reported() {
        let content = format!("{ONE}\n\n{{not json");
        match parse_skill_dataset(&content, Provenance::default()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let content = format!("{ONE}\n{ONE}");
        assert!(matches!(
            parse_skill_dataset(&content, Provenance::default()),
            Err(CorpusError::DuplicateStoryId(id)) if id == "s1"
        ));
    }

    #[test]
    fn empty_question_is_rejected() {
        let bad = ONE.replace("\"what?\"", "\"  \"");
        assert!(matches!(
            parse_skill_dataset(&bad, Provenance::default()),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn save_matches_source_bytes() {
        let ds = parse_skill_dataset(ONE, Provenance::default()).unwrap();
        let mut buf = Vec::new();
        write_skill_dataset(&ds, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{ONE}\n"));
    }
}

//! Loaders for the two public QA formats used as general question-generation
//! data. Unanswerable questions are dropped while loading.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use log::warn;
use serde::Deserialize;
use serde_json::Value;

use super::model::{ExternalFormat, ExternalQaCorpus, QaPair, Story};
use super::CorpusError;
use crate::text::normalize_whitespace;

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
    #[serde(default)]
    is_impossible: bool,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

/// Answer text commonsense-style corpora use to mark an unanswerable item.
const NO_ANSWER: &str = "none of the above choices.";

pub fn load_external_corpus(
    path: impl AsRef<Path>,
    format: ExternalFormat,
) -> Result<ExternalQaCorpus, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let passages = match format {
        ExternalFormat::Extractive => parse_extractive(&content)?,
        ExternalFormat::Commonsense => parse_commonsense(&content)?,
    };
    Ok(ExternalQaCorpus {
        passages,
        source: format,
    })
}

fn span_matches(context: &str, start: usize, text: &str) -> bool {
    let want = text.chars().count();
    context.chars().skip(start).take(want).eq(text.chars())
}

pub(crate) fn parse_extractive(content: &str) -> Result<Vec<Story>, CorpusError> {
    let file: SquadFile = serde_json::from_str(content).map_err(|e| CorpusError::Malformed {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut passages = Vec::new();
    for (ai, article) in file.data.into_iter().enumerate() {
        for (pi, paragraph) in article.paragraphs.into_iter().enumerate() {
            let mut pairs = Vec::new();
            for qa in paragraph.qas {
                if qa.is_impossible {
                    continue;
                }
                let Some(answer) = qa.answers.into_iter().next() else {
                    continue;
                };
                if !span_matches(&paragraph.context, answer.answer_start, &answer.text) {
                    warn!(
                        "answer span of {} does not match its offset {}; keeping the text",
                        qa.id, answer.answer_start
                    );
                }
                let question = normalize_whitespace(&qa.question);
                let answer = normalize_whitespace(&answer.text);
                if question.is_empty() || answer.is_empty() {
                    continue;
                }
                pairs.push(QaPair {
                    id: qa.id,
                    question,
                    answer,
                    skill: None,
                    qtype: None,
                });
            }
            if pairs.is_empty() || paragraph.context.trim().is_empty() {
                continue;
            }
            let id = if article.title.is_empty() {
                format!("a{ai}-p{pi}")
            } else {
                format!("{}-p{pi}", article.title)
            };
            passages.push(Story {
                id,
                text: paragraph.context,
                genre: None,
                pairs,
            });
        }
    }
    Ok(passages)
}

fn string_field<'a>(record: &'a Value, key: &str) -> Option<&'a str> {
    record.get(key).and_then(Value::as_str)
}

fn resolve_commonsense_answer(record: &Value) -> Option<String> {
    if let Some(answer) = string_field(record, "answer") {
        return Some(answer.to_string());
    }
    let label = match record.get("label")? {
        Value::Number(n) => n.as_u64()? as usize,
        Value::String(s) => s.trim().parse().ok()?,
        _ => return None,
    };
    string_field(record, &format!("answer{label}")).map(str::to_string)
}

pub(crate) fn parse_commonsense(content: &str) -> Result<Vec<Story>, CorpusError> {
    let mut grouped: IndexMap<String, Vec<QaPair>> = IndexMap::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Value = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let (Some(context), Some(question)) =
            (string_field(&record, "context"), string_field(&record, "question"))
        else {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: "record needs string fields \"context\" and \"question\"".into(),
            });
        };
        let id = string_field(&record, "id")
            .map(str::to_string)
            .unwrap_or_else(|| format!("line-{line_no}"));
        let entry = grouped.entry(context.to_string()).or_default();
        let answer = resolve_commonsense_answer(&record)
            .map(|a| normalize_whitespace(&a))
            .filter(|a| !a.is_empty() && a.to_lowercase() != NO_ANSWER);
        let question = normalize_whitespace(question);
        let Some(answer) = answer else { continue };
        if question.is_empty() {
            continue;
        }
        entry.push(QaPair {
            id,
            question,
            answer,
            skill: None,
            qtype: None,
        });
    }
    Ok(grouped
        .into_iter()
        .filter(|(context, pairs)| !pairs.is_empty() && !context.trim().is_empty())
        .enumerate()
        .map(|(i, (text, pairs))| Story {
            id: format!("c{i}"),
            text,
            genre: None,
            pairs,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUAD: &str = r#"{"version":"v2.0","data":[{"title":"T","paragraphs":[{"context":"The fox ran to the river.","qas":[
        {"id":"q1","question":"Who ran?","answers":[{"text":"The fox","answer_start":0}],"is_impossible":false},
        {"id":"q2","question":"Where did it run?","answers":[{"text":"the river","answer_start":15}],"is_impossible":false},
        {"id":"q3","question":"Why?","answers":[],"plausible_answers":[{"text":"fox","answer_start":4}],"is_impossible":true}
    ]}]}]}"#;

    #[test]
    fn extractive_drops_unanswerable() {
        let passages = parse_extractive(SQUAD).unwrap();
        assert_eq!(passages.len(), 1);
        let pairs = &passages[0].pairs;
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].answer, "the river");
        assert!(pairs.iter().all(|p| p.skill.is_none() && p.qtype.is_none()));
    }

    #[test]
    fn extractive_empty_data() {
        assert!(parse_extractive(r#"{"data":[]}"#).unwrap().is_empty());
    }

    #[test]
    fn extractive_structural_error() {
        assert!(matches!(
            parse_extractive(r#"{"data":[{"paragraphs":3}]}"#),
            Err(CorpusError::Malformed { .. })
        ));
    }

    #[test]
    fn commonsense_labels_and_no_answer() {
        let content = [
            r#"{"id":"a","context":"Kim lost her keys.","question":"Why was Kim sad?","answer0":"x","answer1":"She lost keys.","answer2":"y","answer3":"None of the above choices .","label":1}"#,
            r#"{"id":"b","context":"Kim lost her keys.","question":"What next?","answer0":"x","answer3":"None of the above choices.","label":"3"}"#,
            r#"{"id":"c","context":"A dog barked.","question":"What barked?","answer":"A dog"}"#,
            r#"{"id":"d","context":"A dog barked.","question":"Unlabeled?","answer0":"x"}"#,
        ]
        .join("\n");
        let passages = parse_commonsense(&content).unwrap();
        assert_eq!(passages.len(), 2);
        assert_eq!(passages[0].pairs.len(), 1);
        assert_eq!(passages[0].pairs[0].answer, "She lost keys.");
        assert_eq!(passages[1].pairs[0].answer, "A dog");
    }

    #[test]
    fn commonsense_missing_fields() {
        assert!(matches!(
            parse_commonsense(r#"{"question":"q"}"#),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }
}

//! Rater packets for answerability / fluency / grammaticality judgments.
//!
//! The exported CSV hides which model produced each question; a separate key
//! file maps row ids back to models for the importer.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanEvalSample {
    pub model: String,
    pub story_id: String,
    pub story_text: String,
    pub question: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketRow {
    pub row_id: String,
    pub story_id: String,
    pub story: String,
    pub question: String,
    #[serde(rename = "Ay")]
    pub ay: Option<f64>,
    #[serde(rename = "Fy")]
    pub fy: Option<f64>,
    #[serde(rename = "Gy")]
    pub gy: Option<f64>,
}

/// Row id → model name.
pub type PacketKey = BTreeMap<String, String>;

/// Shuffles the pool with `seed` and keeps `size` samples.
pub fn export_human_eval_packet(
    samples: &[HumanEvalSample],
    size: usize,
    seed: u64,
) -> (Vec<PacketRow>, PacketKey) {
    if samples.len() < size {
        warn!(
            "pool has {} samples, fewer than the requested {size}; exporting all",
            samples.len()
        );
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(size);
    let width = order.len().to_string().len().max(3);
    let mut rows = Vec::with_capacity(order.len());
    let mut key = PacketKey::new();
    for (i, &idx) in order.iter().enumerate() {
        let s = &samples[idx];
        let row_id = format!("r{:0width$}", i + 1);
        key.insert(row_id.clone(), s.model.clone());
        rows.push(PacketRow {
            row_id,
            story_id: s.story_id.clone(),
            story: s.story_text.clone(),
            question: s.question.clone(),
            ay: None,
            fy: None,
            gy: None,
        });
    }
    (rows, key)
}

pub fn write_packet<W: Write>(rows: &[PacketRow], out: W) -> Result<(), MetricError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_packet_key<R: Read>(input: R) -> Result<PacketKey, MetricError> {
    serde_json::from_reader(input).map_err(|e| MetricError::Invalid(format!("packet key: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRatings {
    pub ay: f64,
    pub fy: f64,
    pub gy: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportOutcome {
    pub per_model: BTreeMap<String, ModelRatings>,
    pub errors: Vec<RowError>,
}

fn rating(value: Option<f64>, name: &str) -> Result<f64, String> {
    match value {
        None => Err(format!("{name} is empty")),
        Some(v) if (1.0..=5.0).contains(&v) => Ok(v),
        Some(v) => Err(format!("{name} = {v} is outside 1..5")),
    }
}

/// Reads a rated packet and averages ratings per model. Bad rows are
/// reported with their line numbers and left out of the means.
pub fn import_human_eval<R: Read>(input: R, key: &PacketKey) -> Result<ImportOutcome, MetricError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut sums: BTreeMap<String, (f64, f64, f64, usize)> = BTreeMap::new();
    let mut errors = Vec::new();
    let headers = reader.headers()?.clone();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: PacketRow = match record.deserialize(Some(&headers)) {
            Ok(row) => row,
            Err(e) => {
                errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let parsed = (|| {
            let model = key
                .get(&row.row_id)
                .ok_or_else(|| format!("row id {:?} is not in the key", row.row_id))?;
            Ok::<_, String>((model, rating(row.ay, "Ay")?, rating(row.fy, "Fy")?, rating(row.gy, "Gy")?))
        })();
        match parsed {
            Ok((model, ay, fy, gy)) => {
                let e = sums.entry(model.clone()).or_insert((0.0, 0.0, 0.0, 0));
                e.0 += ay;
                e.1 += fy;
                e.2 += gy;
                e.3 += 1;
            }
            Err(message) => errors.push(RowError { line, message }),
        }
    }
    let per_model = sums
        .into_iter()
        .map(|(m, (a, f, g, n))| {
            let n_f = n as f64;
            (
                m,
                ModelRatings {
                    ay: a / n_f,
                    fy: f / n_f,
                    gy: g / n_f,
                    n,
                },
            )
        })
        .collect();
    Ok(ImportOutcome { per_model, errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Vec<HumanEvalSample> {
        (0..n)
            .map(|i| HumanEvalSample {
                model: if i % 2 == 0 { "hta_wta" } else { "one_step" }.into(),
                story_id: format!("s{i}"),
                story_text: "A story, with a comma.".into(),
                question: format!("question {i}?"),
            })
            .collect()
    }

    #[test]
    fn exports_whole_pool_of_110_shuffled() {
        let (rows, key) = export_human_eval_packet(&pool(110), 110, 7);
        assert_eq!(rows.len(), 110);
        assert_eq!(key.len(), 110);
        let ids: Vec<&str> = rows.iter().map(|r| r.story_id.as_str()).collect();
        let identity: Vec<String> = (0..110).map(|i| format!("s{i}")).collect();
        assert_ne!(ids, identity.iter().map(String::as_str).collect::<Vec<_>>());
        let mut csv = Vec::new();
        write_packet(&rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("row_id,story_id,story,question,Ay,Fy,Gy\n"));
        assert!(!text.contains("hta_wta"));
    }

    #[test]
    fn constant_ratings_average_to_five() {
        let (mut rows, key) = export_human_eval_packet(&pool(10), 110, 1);
        for r in &mut rows {
            r.ay = Some(5.0);
            r.fy = Some(5.0);
            r.gy = Some(5.0);
        }
        let mut csv = Vec::new();
        write_packet(&rows, &mut csv).unwrap();
        let outcome = import_human_eval(csv.as_slice(), &key).unwrap();
        assert!(outcome.errors.is_empty());
        for m in outcome.per_model.values() {
            assert_eq!((m.ay, m.fy, m.gy), (5.0, 5.0, 5.0));
        }
    }

    #[test]
    fn bad_rows_report_lines() {
        let key: PacketKey = [("r001".to_string(), "m".to_string()), ("r002".to_string(), "m".to_string())]
            .into_iter()
            .collect();
        let csv = "row_id,story_id,story,question,Ay,Fy,Gy\nr001,s,t,q,4,4,4\nr002,s,t,q,9,4,4\nr003,s,t,q,x,1,1\n";
        let outcome = import_human_eval(csv.as_bytes(), &key).unwrap();
        assert_eq!(outcome.per_model["m"].n, 1);
        let lines: Vec<u64> = outcome.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![3, 4]);
    }
}

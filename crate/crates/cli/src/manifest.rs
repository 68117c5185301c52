//! `manifest.json`: content hashes of everything an experiment directory
//! holds, merged across commands.
//!
//! JSON artifacts are hashed after dropping every `wall_clock_seconds` key,
//! so timing noise does not change a hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const VOLATILE_KEYS: &[&str] = &["wall_clock_seconds"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub sha256: String,
    /// Newline count for line-oriented files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lines: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// Inputs by the path they were given as.
    pub inputs: BTreeMap<String, ArtifactEntry>,
    /// Outputs by path relative to the manifest's directory.
    pub artifacts: BTreeMap<String, ArtifactEntry>,
    pub notes: BTreeMap<String, Value>,
}

fn strip_volatile(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for k in VOLATILE_KEYS {
                map.remove(*k);
            }
            map.values_mut().for_each(strip_volatile);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

fn is_line_oriented(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "csv" | "txt")
    )
}

pub fn hash_file(path: &Path) -> Result<ArtifactEntry> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let digest = if path.extension().is_some_and(|e| e == "json") {
        match serde_json::from_slice::<Value>(&bytes) {
            Ok(mut v) => {
                strip_volatile(&mut v);
                Sha256::digest(serde_json::to_vec(&v).expect("value serializes"))
            }
            Err(_) => Sha256::digest(&bytes),
        }
    } else {
        Sha256::digest(&bytes)
    };
    let lines = is_line_oriented(path).then(|| bytes.iter().filter(|&&b| b == b'\n').count());
    Ok(ArtifactEntry {
        sha256: hex::encode(digest),
        lines,
    })
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

impl Manifest {
    pub fn load_or_new(root: &Path, seed: u64) -> Result<Manifest> {
        let path = root.join(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(Manifest {
                seed,
                ..Manifest::default()
            });
        }
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let mut m: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        m.seed = seed;
        Ok(m)
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let entry = hash_file(path)?;
        self.inputs.insert(path.display().to_string(), entry);
        Ok(())
    }

    /// Hashes every file under `dir` (recursively) into the artifact table.
    pub fn record_tree(&mut self, root: &Path, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        walk(dir, &mut files)?;
        for f in files {
            self.record(root, &f)?;
        }
        Ok(())
    }

    pub fn record(&mut self, root: &Path, path: &Path) -> Result<()> {
        let key = relative(root, path);
        if key == MANIFEST_FILE {
            return Ok(());
        }
        let entry = hash_file(path)?;
        self.artifacts.insert(key, entry);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: Value) {
        self.notes.insert(key.to_string(), value);
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let mut json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        json.push(b'\n');
        fs::write(&path, json).map_err(|e| CliError::io(&path, e))
    }

    /// Artifacts that are missing or whose content no longer matches.
    pub fn verify(&self, root: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|(rel, entry)| match hash_file(&root.join(rel.as_str())) {
                Ok(now) => &now != *entry,
                Err(_) => true,
            })
            .map(|(rel, _)| rel.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_clock_does_not_change_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        fs::write(&a, r#"{"x": 1, "inner": [{"wall_clock_seconds": 1.5}], "wall_clock_seconds": 2.0}"#).unwrap();
        fs::write(&b, r#"{"x": 1, "inner": [{"wall_clock_seconds": 9.25}], "wall_clock_seconds": 0.1}"#).unwrap();
        assert_eq!(hash_file(&a).unwrap(), hash_file(&b).unwrap());
        fs::write(&b, r#"{"x": 2}"#).unwrap();
        assert_ne!(hash_file(&a).unwrap(), hash_file(&b).unwrap());
    }

    #[test]
    fn records_relative_paths_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("data");
        fs::create_dir_all(&sub).unwrap();
        fs::write(sub.join("x.jsonl"), "{}\n{}\n").unwrap();
        let mut m = Manifest::load_or_new(dir.path(), 1).unwrap();
        m.record_tree(dir.path(), &sub).unwrap();
        assert_eq!(m.artifacts["data/x.jsonl"].lines, Some(2));
        m.save(dir.path()).unwrap();
        let back = Manifest::load_or_new(dir.path(), 1).unwrap();
        assert_eq!(back, m);
        assert!(back.verify(dir.path()).is_empty());
        fs::write(sub.join("x.jsonl"), "{}\n").unwrap();
        assert_eq!(back.verify(dir.path()), vec!["data/x.jsonl".to_string()]);
    }
}

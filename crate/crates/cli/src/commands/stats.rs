use std::path::Path;

use skillforge_core::corpus::{compute_stats, load_skill_dataset, CorpusStats};

use crate::error::Result;
use crate::layout::write_bytes;

/// Per-skill counts of one skill dataset, optionally written as CSV.
pub fn stats(input: &Path, csv_out: Option<&Path>) -> Result<CorpusStats> {
    let stats = compute_stats(&load_skill_dataset(input)?);
    if let Some(out) = csv_out {
        write_bytes(out, stats.to_csv().as_bytes())?;
    }
    Ok(stats)
}

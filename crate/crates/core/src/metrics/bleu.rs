//! Corpus-level BLEU.
//!
//! Tokens are lowercased with punctuation detached. Modified n-gram counts
//! are clipped by the maximum count in any single reference and pooled over
//! the corpus; the brevity penalty uses, per hypothesis, the reference length
//! closest to the hypothesis length (shorter wins ties). A zero n-gram match
//! count is smoothed by adding `1e-9` to the numerator. Orders for which the
//! corpus has no hypothesis n-grams at all are left out of the geometric
//! mean, so a one-word hypothesis equal to its reference scores 100 at every
//! order.

use std::collections::HashMap;

use super::{MetricError, ScoredPair};
use crate::text::metric_tokens;

pub const SMOOTHING_EPSILON: f64 = 1e-9;

/// Pooled n-gram statistics for orders 1..=4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub hypothesis_len: usize,
    pub reference_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn add_sentence(&mut self, hypothesis: &[String], references: &[Vec<String>]) {
        for n in 1..=4 {
            let hyp = ngram_counts(hypothesis, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in references {
                for (gram, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(gram).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            let clipped: usize = hyp
                .iter()
                .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
            self.matches[n - 1] += clipped;
            self.totals[n - 1] += hypothesis.len().saturating_sub(n - 1);
        }
        let h = hypothesis.len();
        let closest = references
            .iter()
            .map(Vec::len)
            .min_by_key(|&r| (r.abs_diff(h), r))
            .unwrap_or(0);
        self.hypothesis_len += h;
        self.reference_len += closest;
    }

    /// Modified precision of order `n` (1-based), unsmoothed.
    pub fn precision(&self, n: usize) -> Option<f64> {
        let total = self.totals[n - 1];
        (total > 0).then(|| self.matches[n - 1] as f64 / total as f64)
    }

    pub fn brevity_penalty(&self) -> f64 {
        let (c, r) = (self.hypothesis_len as f64, self.reference_len as f64);
        if c == 0.0 {
            0.0
        } else if c > r {
            1.0
        } else {
            (1.0 - r / c).exp()
        }
    }

    /// BLEU with uniform weights over orders `1..=max_n`, as a percentage.
    pub fn score(&self, max_n: usize) -> f64 {
        let bp = self.brevity_penalty();
        if bp == 0.0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 1..=max_n {
            let total = self.totals[n - 1];
            if total == 0 {
                continue;
            }
            let m = self.matches[n - 1] as f64;
            let m = if m == 0.0 { SMOOTHING_EPSILON } else { m };
            log_sum += (m / total as f64).ln();
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        (100.0 * bp * (log_sum / orders as f64).exp()).clamp(0.0, 100.0)
    }
}

pub fn corpus_stats(pairs: &[ScoredPair]) -> BleuStats {
    let mut stats = BleuStats::default();
    for pair in pairs {
        let hyp = metric_tokens(&pair.hypothesis);
        let refs: Vec<Vec<String>> = pair.references.iter().map(|r| metric_tokens(r)).collect();
        stats.add_sentence(&hyp, &refs);
    }
    stats
}

/// BLEU-1 through BLEU-`max_n` as percentages.
pub fn bleu(pairs: &[ScoredPair], max_n: usize) -> Result<Vec<f64>, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    if !(1..=4).contains(&max_n) {
        return Err(MetricError::Invalid(format!("max_n {max_n} outside 1..=4")));
    }
    for p in pairs {
        p.validate()?;
    }
    let stats = corpus_stats(pairs);
    Ok((1..=max_n).map(|n| stats.score(n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(h: &str, r: &str) -> ScoredPair {
        ScoredPair::new(h, vec![r.to_string()])
    }

    #[test]
    fn identity_is_100() {
        for text in ["the cat sat on the mat .", "Hi", "a b", "What did the author mean?"] {
            let scores = bleu(&[pair(text, text)], 4).unwrap();
            for s in scores {
                assert!((s - 100.0).abs() < 1e-9, "{text}: {s}");
            }
        }
    }

    #[test]
    fn hand_counted_precisions() {
        let stats = corpus_stats(&[pair("the cat sat", "the cat ran")]);
        assert_eq!(stats.precision(1), Some(2.0 / 3.0));
        assert_eq!(stats.precision(2), Some(0.5));
        assert_eq!(stats.brevity_penalty(), 1.0);
        let scores = bleu(&[pair("the cat sat", "the cat ran")], 2).unwrap();
        assert!((scores[0] - 100.0 * 2.0 / 3.0).abs() < 1e-9);
        assert!((scores[1] - 100.0 * (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn clipping_uses_max_reference_count() {
        let stats = corpus_stats(&[pair("the the the", "the cat")]);
        assert_eq!(stats.matches[0], 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(bleu(&[], 4), Err(MetricError::Empty)));
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillforge_core::backend::{BackendError, IdPair, LossStats, Seq2SeqBackend, TokenId};
use skillforge_core::decoding::{generate, nucleus_filter, sample_from, SamplerConfig, TerminatedBy};

fn random_distribution(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(1..40);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            // Coarse values make exact ties common.
            if rng.gen_bool(0.3) {
                rng.gen_range(1..4) as f64
            } else {
                rng.gen::<f64>().powi(3)
            }
        })
        .collect();
    if v.iter().sum::<f64>() == 0.0 {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Smallest prefix, in (probability desc, id asc) order, reaching mass `p`.
/// Selection-sort style so it shares no code with the filter.
fn oracle_kept(dist: &[f64], p: f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..dist.len()).collect();
    let mut kept = Vec::new();
    let mut mass = 0.0;
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (a, b) = (remaining[i], remaining[best]);
            if dist[a] > dist[b] || (dist[a] == dist[b] && a < b) {
                best = i;
            }
        }
        let id = remaining.remove(best);
        kept.push(id);
        mass += dist[id];
        if mass >= p {
            break;
        }
    }
    kept
}

#[test]
fn kept_set_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let dist = random_distribution(&mut rng);
        let p = if rng.gen_bool(0.1) { 1.0 } else { rng.gen_range(0.05..1.0) };
        let f = nucleus_filter(&dist, p).unwrap();
        assert_eq!(f.kept, oracle_kept(&dist, p), "p = {p}, dist = {dist:?}");
        assert!((f.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn sampling_frequencies_match_truncated_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fixed = vec![0.5, 0.3, 0.15, 0.05];
    let mut cases = vec![fixed];
    cases.extend((0..4).map(|_| random_distribution(&mut rng)));
    for dist in cases {
        let f = nucleus_filter(&dist, 0.9).unwrap();
        let mut counts = vec![0usize; dist.len()];
        let draws = 10_000;
        for _ in 0..draws {
            counts[sample_from(&f, &mut rng)] += 1;
        }
        let linf = counts
            .iter()
            .zip(&f.probs)
            .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
            .fold(0.0, f64::max);
        assert!(linf <= 0.02, "L-inf {linf}");
        for (i, &c) in counts.iter().enumerate() {
            if !f.kept.contains(&i) {
                assert_eq!(c, 0);
            }
        }
    }
}

/// Emits a fixed token sequence, then eos.
struct Script(Vec<TokenId>);

impl Seq2SeqBackend for Script {
    fn kind(&self) -> &'static str {
        "script"
    }
    fn vocab_size(&self) -> usize {
        4
    }
    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().map(|w| w.parse().unwrap()).collect()
    }
    fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
    }
    fn token_id(&self, _: &str) -> Option<TokenId> {
        None
    }
    fn eos_id(&self) -> TokenId {
        3
    }
    fn register_special_tokens(&mut self, _: &[&str]) -> Result<(), BackendError> {
        Ok(())
    }
    fn loss(&self, _: &[IdPair]) -> Result<LossStats, BackendError> {
        Ok(LossStats::default())
    }
    fn accumulate_gradients(&mut self, _: &[IdPair]) -> Result<LossStats, BackendError> {
        Ok(LossStats::default())
    }
    fn apply_gradient_step(&mut self, _: f64) -> Result<(), BackendError> {
        Ok(())
    }
    fn reset_optimizer(&mut self) {}
    fn next_token_distribution(&self, _: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        let next = self.0.get(prefix.len()).copied().unwrap_or(3) as usize;
        let mut d = vec![0.0; 4];
        d[next] = 1.0;
        Ok(d)
    }
    fn snapshot(&self) -> Vec<u8> {
        Vec::new()
    }
    fn restore(&mut self, _: &[u8]) -> Result<(), BackendError> {
        Ok(())
    }
}

#[test]
fn generation_stops_at_eos_or_length() {
    let b = Script(vec![1, 2, 1]);
    let g = generate(&b, "0", &SamplerConfig::default()).unwrap();
    assert_eq!(g.token_ids, vec![1, 2, 1, 3]);
    assert_eq!(g.text, "1 2 1");
    assert_eq!(g.terminated_by, TerminatedBy::Eos);
    assert!(g.nucleus_sizes.iter().all(|&n| n == 1));
    let short = generate(
        &b,
        "0",
        &SamplerConfig {
            max_new_tokens: 2,
            ..SamplerConfig::default()
        },
    )
    .unwrap();
    assert_eq!(short.terminated_by, TerminatedBy::MaxLen);
    assert_eq!(short.token_ids, vec![1, 2]);
}

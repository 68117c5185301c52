use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillforge_core::alignment::{
    align_answer, align_corpus, enumerate_spans, exact_span, AlignError, AlignMode, EmbeddingProvider,
    HashedSubwordEmbedder, SpanBounds,
};
use skillforge_core::corpus::{Provenance, QaPair, QuestionType, Skill, SkillDataset, Story};

/// Counts of the 26 lowercase letters.
struct BagOfChars;

impl EmbeddingProvider for BagOfChars {
    fn dim(&self) -> usize {
        26
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, AlignError> {
        let mut v = vec![0.0; 26];
        for c in text.chars().filter(char::is_ascii_lowercase) {
            v[(c as u8 - b'a') as usize] += 1.0;
        }
        Ok(v)
    }
}

const WORDS: &[&str] = &[
    "fox", "jumps", "over", "lazy", "dog", "bright", "sun", "river", "stone", "quiet", "owl", "hops", ",", ".",
];

fn text(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn cos(a: &[f64], b: &[f64]) -> Option<f64> {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt();
    (n > 0.0).then(|| d / n)
}

/// Scores every window directly from the whitespace tokens and keeps the
/// first maximum in (start, length) order.
fn brute_force(passage: &str, answer: &str, max_len: usize) -> (usize, usize, f64) {
    let p: Vec<&str> = passage.split_whitespace().collect();
    let target = BagOfChars.embed(answer).unwrap();
    let mut best: Option<(usize, usize, f64)> = None;
    for s in 0..p.len() {
        for e in s + 1..=(s + max_len).min(p.len()) {
            let v = BagOfChars.embed(&p[s..e].join(" ")).unwrap();
            if let Some(c) = cos(&target, &v) {
                if best.map_or(true, |b| c > b.2 + 1e-12) {
                    best = Some((s, e, c));
                }
            }
        }
    }
    best.unwrap()
}

#[test]
fn alignment_equals_exhaustive_scoring() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut done = 0;
    while done < 100 {
        let passage = text(&mut rng, 4, 25);
        let answer = text(&mut rng, 1, 4);
        if BagOfChars.embed(&answer).unwrap().iter().all(|&x| x == 0.0)
            || BagOfChars.embed(&passage).unwrap().iter().all(|&x| x == 0.0)
        {
            continue;
        }
        let alen = answer.split_whitespace().count();
        let max_len = (alen + 5).min(20);
        let got = align_answer(&passage, &answer, &BagOfChars, SpanBounds::default()).unwrap();
        let (s, e, c) = brute_force(&passage, &answer, max_len);
        assert_eq!((got.start, got.end), (s, e), "{passage:?} / {answer:?}");
        assert!((got.score - c).abs() < 1e-12);
        done += 1;
    }
}

#[test]
fn span_count_has_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let passage = text(&mut rng, 1, 30);
        let n = passage.split_whitespace().count();
        let lo = rng.gen_range(1..=4);
        let hi = rng.gen_range(lo..=8);
        let expected: usize = (lo..=hi.min(n)).map(|l| n - l + 1).sum();
        assert_eq!(enumerate_spans(&passage, lo, hi).unwrap().len(), expected);
    }
}

#[test]
fn verbatim_answers_take_the_exact_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut stories = Vec::new();
    for i in 0..50 {
        let passage = text(&mut rng, 5, 20);
        let toks: Vec<&str> = passage.split_whitespace().collect();
        let s = rng.gen_range(0..toks.len());
        let e = rng.gen_range(s + 1..=toks.len().min(s + 4));
        let answer = toks[s..e].join(" ").to_uppercase();
        let span = exact_span(&passage, &answer).unwrap();
        assert_eq!(span.score, 1.0);
        stories.push(Story {
            id: format!("v{i}"),
            text: passage,
            genre: None,
            pairs: vec![QaPair {
                id: format!("v{i}-0"),
                question: "what ?".into(),
                answer,
                skill: Some(Skill::Summarizing),
                qtype: Some(QuestionType::Inferential),
            }],
        });
    }
    let ds = SkillDataset::new(stories, Provenance::default()).unwrap();
    let aligned = align_corpus(&ds, &HashedSubwordEmbedder::default(), SpanBounds::default());
    assert_eq!(aligned.failures(), 0);
    for rec in &aligned.records {
        let span = rec.span.as_ref().unwrap();
        assert_eq!(span.mode, AlignMode::Exact);
        assert_eq!(span.score, 1.0);
    }
}

#[test]
fn paraphrased_answers_are_aligned() {
    let passage = "the owl sat in the quiet river stone all night .";
    let answer = "a stone by the river";
    let ds = SkillDataset::new(
        vec![Story {
            id: "p".into(),
            text: passage.into(),
            genre: None,
            pairs: vec![QaPair {
                id: "p-0".into(),
                question: "where ?".into(),
                answer: answer.into(),
                skill: Some(Skill::Summarizing),
                qtype: Some(QuestionType::Inferential),
            }],
        }],
        Provenance::default(),
    )
    .unwrap();
    let aligned = align_corpus(&ds, &BagOfChars, SpanBounds::default());
    let span = aligned.records[0].span.as_ref().unwrap();
    assert_eq!(span.mode, AlignMode::Aligned);
    let (s, e, c) = brute_force(passage, answer, 10);
    assert_eq!((span.start, span.end), (s, e));
    assert!((span.score - c).abs() < 1e-12);
    let mut out = Vec::new();
    aligned.write_jsonl(&mut out).unwrap();
    let line: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(line["pairs"][0]["span"]["mode"], "aligned");
}

#[test]
fn scores_are_scale_invariant() {
    struct Scaled(f64);
    impl EmbeddingProvider for Scaled {
        fn dim(&self) -> usize {
            26
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, AlignError> {
            Ok(BagOfChars.embed(text)?.into_iter().map(|x| x * self.0).collect())
        }
    }
    let passage = "bright sun over the lazy river , owl hops .";
    let a = align_answer(passage, "sunny river", &BagOfChars, SpanBounds::default()).unwrap();
    let b = align_answer(passage, "sunny river", &Scaled(7.5), SpanBounds::default()).unwrap();
    assert_eq!((a.start, a.end), (b.start, b.end));
    assert!((a.score - b.score).abs() < 1e-12);
}

#[test]
fn degenerate_inputs_are_errors() {
    let b = SpanBounds::default();
    assert_eq!(align_answer("", "x", &BagOfChars, b), Err(AlignError::EmptyPassage));
    assert_eq!(align_answer("a b", "  ", &BagOfChars, b), Err(AlignError::EmptyAnswer));
    assert_eq!(align_answer("a b", "123", &BagOfChars, b), Err(AlignError::DegenerateAnswer));
    let bad = SpanBounds {
        min_len: 3,
        max_len: Some(2),
    };
    assert!(matches!(align_answer("a b", "a", &BagOfChars, bad), Err(AlignError::InvalidBounds(_))));
}

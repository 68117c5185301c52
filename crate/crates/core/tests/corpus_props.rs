use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillforge_core::corpus::{
    compute_stats, load_skill_dataset, parse_skill_dataset, save_skill_dataset, stratified_split, subsample_few_shot,
    FewShotAmount, Provenance, QaPair, QuestionType, Skill, SkillDataset, SplitSpec, Story,
};

fn random_corpus(rng: &mut ChaCha8Rng, stories: usize, max_skills: usize) -> SkillDataset {
    let stories = (0..stories)
        .map(|i| {
            let k = rng.gen_range(1..=max_skills);
            let skills: Vec<Skill> = Skill::ALL.choose_multiple(rng, k).copied().collect();
            Story {
                id: format!("s{i}"),
                text: format!("story {i} , with words ."),
                genre: None,
                pairs: skills
                    .iter()
                    .enumerate()
                    .map(|(j, &s)| QaPair {
                        id: format!("s{i}-{j}"),
                        question: format!("q{j} ?"),
                        answer: format!("a{j}"),
                        skill: Some(s),
                        qtype: Some(if j % 2 == 0 { QuestionType::Literal } else { QuestionType::Inferential }),
                    })
                    .collect(),
            }
        })
        .collect();
    SkillDataset::new(stories, Provenance::default()).unwrap()
}

fn stories_with(ds: &SkillDataset, skill: Skill) -> usize {
    ds.stories.iter().filter(|s| s.has_skill(skill)).count()
}

#[test]
fn split_proportions_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let n = if case == 0 { 500 } else { rng.gen_range(40..400) };
        let ds = random_corpus(&mut rng, n, 4);
        let spec = SplitSpec {
            seed: case,
            ..SplitSpec::default()
        };
        let split = stratified_split(&ds, &spec).unwrap();

        // Partition: every story exactly once, pairs intact.
        let mut seen = HashSet::new();
        for part in [&split.train, &split.val, &split.test] {
            for s in &part.stories {
                assert!(seen.insert(s.id.clone()), "story {} placed twice", s.id);
                let original = ds.stories.iter().find(|o| o.id == s.id).unwrap();
                assert_eq!(original, s);
            }
        }
        assert_eq!(seen.len(), ds.stories.len());

        for skill in Skill::ALL {
            let total = stories_with(&ds, skill) as f64;
            let val = stories_with(&split.val, skill) as f64;
            let test = stories_with(&split.test, skill) as f64;
            assert!((val - 0.1 * total).abs() <= 1.0, "case {case} {skill}: val {val} of {total}");
            assert!((test - 0.2 * total).abs() <= 1.0, "case {case} {skill}: test {test} of {total}");
        }
    }
}

#[test]
fn split_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ds = random_corpus(&mut rng, 120, 3);
    let a = stratified_split(&ds, &SplitSpec::default()).unwrap();
    let b = stratified_split(&ds, &SplitSpec::default()).unwrap();
    assert_eq!(a.test.stories, b.test.stories);
    assert_eq!(a.val.stories, b.val.stories);
}

/// Recounts per-skill statistics directly from the records.
#[test]
fn stats_match_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ds = random_corpus(&mut rng, 50, 5);
    let stats = compute_stats(&ds);
    for skill in Skill::ALL {
        let pairs: Vec<&QaPair> = ds.pairs().filter(|(_, p)| p.skill == Some(skill)).map(|(_, p)| p).collect();
        let row = &stats.per_skill[&skill];
        assert_eq!(row.pairs, pairs.len());
        assert_eq!(row.stories, stories_with(&ds, skill));
        let lit = pairs.iter().filter(|p| p.qtype == Some(QuestionType::Literal)).count();
        assert_eq!(row.literal, lit);
        assert_eq!(row.inferential, pairs.len() - lit);
        // "q0 ?" is two tokens once punctuation is detached.
        if !pairs.is_empty() {
            assert_eq!(row.avg_question_tokens, 2.0);
            assert_eq!(row.max_answer_tokens, 1);
        }
    }
    assert_eq!(stats.totals.pairs, ds.pair_count());
}

#[test]
fn few_shot_counts() {
    let mut stories = Vec::new();
    for skill in Skill::ALL {
        for i in 0..40 {
            let id = format!("{}-{i}", skill.code());
            stories.push(Story {
                id: id.clone(),
                text: "text".into(),
                genre: None,
                pairs: vec![QaPair {
                    id: format!("{id}-p"),
                    question: "q".into(),
                    answer: "a".into(),
                    skill: Some(skill),
                    qtype: Some(QuestionType::Literal),
                }],
            });
        }
    }
    let ds = SkillDataset::new(stories, Provenance::default()).unwrap();
    let count = |d: &SkillDataset| {
        let mut m: BTreeMap<Skill, usize> = BTreeMap::new();
        for (_, p) in d.pairs() {
            *m.entry(p.skill.unwrap()).or_default() += 1;
        }
        m
    };
    let one = subsample_few_shot(&ds, FewShotAmount::PerSkill(1), 3).unwrap();
    assert_eq!(one.pair_count(), 9);
    assert!(count(&one).values().all(|&c| c == 1));
    let half = subsample_few_shot(&ds, FewShotAmount::Ratio(0.5), 3).unwrap();
    assert!(count(&half).values().all(|&c| (19..=21).contains(&c)));
    let full = subsample_few_shot(&ds, FewShotAmount::Ratio(1.0), 3).unwrap();
    assert_eq!(full.stories, ds.stories);
    assert_eq!(
        subsample_few_shot(&ds, FewShotAmount::Ratio(0.3), 9).unwrap(),
        subsample_few_shot(&ds, FewShotAmount::Ratio(0.3), 9).unwrap()
    );
    assert!(subsample_few_shot(&ds, FewShotAmount::Ratio(0.0), 1).is_err());
    assert!(subsample_few_shot(&ds, FewShotAmount::Ratio(1.5), 1).is_err());
}

fn arb_text() -> impl Strategy<Value = String> {
    "[a-zA-Z][a-zA-Z ,.'!?é]{0,30}".prop_filter("non-blank", |s| !s.trim().is_empty())
}

fn arb_dataset() -> impl Strategy<Value = SkillDataset> {
    let pair = (arb_text(), arb_text(), 0usize..9, any::<bool>());
    let story = (arb_text(), proptest::option::of("[a-z]{3,8}"), prop::collection::vec(pair, 0..4));
    prop::collection::vec(story, 0..6).prop_map(|stories| {
        let stories = stories
            .into_iter()
            .enumerate()
            .map(|(i, (text, genre, pairs))| Story {
                id: format!("story-{i}"),
                text,
                genre,
                pairs: pairs
                    .into_iter()
                    .enumerate()
                    .map(|(j, (q, a, s, lit))| QaPair {
                        id: format!("{i}.{j}"),
                        question: q,
                        answer: a,
                        skill: Some(Skill::ALL[s]),
                        qtype: Some(if lit { QuestionType::Literal } else { QuestionType::Inferential }),
                    })
                    .collect(),
            })
            .collect();
        SkillDataset::new(stories, Provenance::default()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn load_save_round_trip(ds in arb_dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_skill_dataset(&ds, &path).unwrap();
        let back = load_skill_dataset(&path).unwrap();
        prop_assert_eq!(&back.stories, &ds.stories);
        let text = std::fs::read_to_string(&path).unwrap();
        let again = parse_skill_dataset(&text, Provenance::default()).unwrap();
        prop_assert_eq!(again.stories, ds.stories);
    }
}

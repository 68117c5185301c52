//! Story-level stratified train/validation/test splitting.
//!
//! A story belongs to the stratum of every skill it contains. Stories are
//! placed rarest-skill-first (iterative stratification): the skill with the
//! fewest unplaced stories is handled next, and each of its stories goes to
//! the split that still wants the most stories of that skill. A short local
//! search then moves or swaps stories while that lowers the squared distance
//! between per-skill split counts and their targets.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Provenance, Skill, SkillDataset};
use super::CorpusError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_fraction: 0.10,
            test_fraction: 0.20,
            seed: 13,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let in_range = |f: f64| f > 0.0 && f < 1.0;
        if !in_range(self.val_fraction) || !in_range(self.test_fraction) {
            return Err(CorpusError::InvalidSplit(
                "fractions must lie in (0, 1)".into(),
            ));
        }
        if self.val_fraction + self.test_fraction >= 1.0 {
            return Err(CorpusError::InvalidSplit(
                "val_fraction + test_fraction must be < 1".into(),
            ));
        }
        Ok(())
    }

    fn fraction(&self, part: usize) -> f64 {
        match part {
            VAL => self.val_fraction,
            TEST => self.test_fraction,
            _ => 1.0 - self.val_fraction - self.test_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: SkillDataset,
    pub val: SkillDataset,
    pub test: SkillDataset,
}

const TRAIN: usize = 0;
const VAL: usize = 1;
const TEST: usize = 2;

struct Placement<'a> {
    skills: &'a [Vec<usize>],
    targets: [[f64; 9]; 3],
    counts: [[i64; 9]; 3],
    assignment: Vec<usize>,
}

impl Placement<'_> {
    fn place(&mut self, story: usize, part: usize) {
        self.assignment[story] = part;
        for &k in &self.skills[story] {
            self.counts[part][k] += 1;
        }
    }

    /// Change in the objective when `story` moves from its split to `to`.
    fn move_delta(&self, story: usize, to: usize) -> f64 {
        let from = self.assignment[story];
        let mut delta = 0.0;
        for &k in &self.skills[story] {
            for (part, change) in [(from, -1i64), (to, 1)] {
                if part == TRAIN {
                    continue;
                }
                let c = self.counts[part][k] as f64;
                let t = self.targets[part][k];
                delta += (c + change as f64 - t).powi(2) - (c - t).powi(2);
            }
        }
        delta
    }

    fn swap_delta(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.assignment[a], self.assignment[b]);
        let mut change = [[0i64; 9]; 3];
        for &k in &self.skills[a] {
            change[pa][k] -= 1;
            change[pb][k] += 1;
        }
        for &k in &self.skills[b] {
            change[pb][k] -= 1;
            change[pa][k] += 1;
        }
        let mut delta = 0.0;
        for part in [VAL, TEST] {
            for k in 0..9 {
                if change[part][k] != 0 {
                    let c = self.counts[part][k] as f64;
                    let t = self.targets[part][k];
                    delta += (c + change[part][k] as f64 - t).powi(2) - (c - t).powi(2);
                }
            }
        }
        delta
    }

    fn unplace(&mut self, story: usize) {
        let part = self.assignment[story];
        for &k in &self.skills[story] {
            self.counts[part][k] -= 1;
        }
    }
}

/// Splits by story so that, for every skill, the validation and test splits
/// hold about `val_fraction` and `test_fraction` of the stories containing it.
pub fn stratified_split(dataset: &SkillDataset, spec: &SplitSpec) -> Result<DatasetSplit, CorpusError> {
    spec.validate()?;
    let n = dataset.stories.len();
    let skills: Vec<Vec<usize>> = dataset
        .stories
        .iter()
        .map(|s| s.skills().into_iter().map(Skill::index).collect())
        .collect();

    let mut per_skill = [0usize; 9];
    for story_skills in &skills {
        for &k in story_skills {
            per_skill[k] += 1;
        }
    }

    let mut pinned = vec![false; n];
    for (k, &count) in per_skill.iter().enumerate() {
        if count == 1 {
            warn!(
                "skill {} appears in a single story; fractions are infeasible, keeping it in train",
                Skill::ALL[k]
            );
            for (i, story_skills) in skills.iter().enumerate() {
                if story_skills.contains(&k) {
                    pinned[i] = true;
                }
            }
        }
    }

    let mut targets = [[0.0; 9]; 3];
    let mut wanted = [[0i64; 9]; 3];
    for k in 0..9 {
        let total = per_skill[k] as f64;
        for part in [VAL, TEST] {
            targets[part][k] = spec.fraction(part) * total;
            wanted[part][k] = if per_skill[k] < 2 {
                0
            } else {
                targets[part][k].round() as i64
            };
        }
        targets[TRAIN][k] = spec.fraction(TRAIN) * total;
        wanted[TRAIN][k] = per_skill[k] as i64 - wanted[VAL][k] - wanted[TEST][k];
    }
    let mut wanted_total = [0i64; 3];
    wanted_total[VAL] = (spec.val_fraction * n as f64).round() as i64;
    wanted_total[TEST] = (spec.test_fraction * n as f64).round() as i64;
    wanted_total[TRAIN] = n as i64 - wanted_total[VAL] - wanted_total[TEST];

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut placement = Placement {
        skills: &skills,
        targets,
        counts: [[0; 9]; 3],
        assignment: vec![TRAIN; n],
    };
    let mut placed = vec![false; n];

    for i in 0..n {
        if pinned[i] || skills[i].is_empty() {
            placement.place(i, TRAIN);
            placed[i] = true;
            for &k in &skills[i] {
                wanted[TRAIN][k] -= 1;
            }
            wanted_total[TRAIN] -= 1;
        }
    }

    loop {
        let mut remaining = [0usize; 9];
        for i in (0..n).filter(|&i| !placed[i]) {
            for &k in &skills[i] {
                remaining[k] += 1;
            }
        }
        let Some(rarest) = (0..9)
            .filter(|&k| remaining[k] > 0)
            .min_by_key(|&k| (remaining[k], k))
        else {
            break;
        };
        let mut members: Vec<usize> = (0..n)
            .filter(|&i| !placed[i] && skills[i].contains(&rarest))
            .collect();
        members.shuffle(&mut rng);
        for i in members {
            let best = [TRAIN, VAL, TEST]
                .into_iter()
                .map(|p| (wanted[p][rarest], wanted_total[p], p))
                .max_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)))
                .map(|(w, t, _)| (w, t))
                .unwrap();
            let ties: Vec<usize> = [TRAIN, VAL, TEST]
                .into_iter()
                .filter(|&p| (wanted[p][rarest], wanted_total[p]) == best)
                .collect();
            let part = ties[rng.gen_range(0..ties.len())];
            placement.place(i, part);
            placed[i] = true;
            for &k in &skills[i] {
                wanted[part][k] -= 1;
            }
            wanted_total[part] -= 1;
        }
    }

    repair(&mut placement, &pinned);

    let build = |part: usize, tag: &str| SkillDataset {
        stories: dataset
            .stories
            .iter()
            .enumerate()
            .filter(|(i, _)| placement.assignment[*i] == part)
            .map(|(_, s)| s.clone())
            .collect(),
        provenance: Provenance {
            source: dataset.provenance.source.clone(),
            format: format!("{}+split:{tag}", dataset.provenance.format),
        },
    };
    Ok(DatasetSplit {
        train: build(TRAIN, "train"),
        val: build(VAL, "val"),
        test: build(TEST, "test"),
    })
}

const MAX_REPAIR_PASSES: usize = 50;
const IMPROVEMENT: f64 = 1e-9;

fn repair(placement: &mut Placement<'_>, pinned: &[bool]) {
    let n = placement.assignment.len();
    let movable: Vec<usize> = (0..n)
        .filter(|&i| !pinned[i] && !placement.skills[i].is_empty())
        .collect();
    for _ in 0..MAX_REPAIR_PASSES {
        let mut improved = false;
        for &i in &movable {
            let from = placement.assignment[i];
            let best = [TRAIN, VAL, TEST]
                .into_iter()
                .filter(|&p| p != from)
                .map(|p| (placement.move_delta(i, p), p))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((delta, to)) = best {
                if delta < -IMPROVEMENT {
                    placement.unplace(i);
                    placement.place(i, to);
                    improved = true;
                }
            }
        }
        for (ai, &a) in movable.iter().enumerate() {
            for &b in &movable[ai + 1..] {
                if placement.assignment[a] == placement.assignment[b] {
                    continue;
                }
                if placement.swap_delta(a, b) < -IMPROVEMENT {
                    let (pa, pb) = (placement.assignment[a], placement.assignment[b]);
                    placement.unplace(a);
                    placement.unplace(b);
                    placement.place(a, pb);
                    placement.place(b, pa);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QaPair, QuestionType, Story};

    fn single_skill_dataset(per_skill: usize) -> SkillDataset {
        let mut stories = Vec::new();
        for skill in Skill::ALL {
            for i in 0..per_skill {
                let id = format!("{}-{i}", skill.code());
                stories.push(Story {
                    id: id.clone(),
                    text: "once upon a time".into(),
                    genre: None,
                    pairs: vec![QaPair {
                        id: format!("{id}-q"),
                        question: "what ?".into(),
                        answer: "time".into(),
                        skill: Some(skill),
                        qtype: Some(QuestionType::Literal),
                    }],
                });
            }
        }
        SkillDataset::new(stories, Provenance::default()).unwrap()
    }

    fn counts(ds: &SkillDataset, skill: Skill) -> usize {
        ds.stories.iter().filter(|s| s.has_skill(skill)).count()
    }

    #[test]
    fn exact_proportions_for_single_skill_stories() {
        let ds = single_skill_dataset(10);
        let split = stratified_split(&ds, &SplitSpec::default()).unwrap();
        for skill in Skill::ALL {
            assert_eq!(counts(&split.train, skill), 7);
            assert_eq!(counts(&split.val, skill), 1);
            assert_eq!(counts(&split.test, skill), 2);
        }
    }

    #[test]
    fn seeds_change_membership_not_counts() {
        let ds = single_skill_dataset(10);
        let a = stratified_split(&ds, &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap();
        let b = stratified_split(&ds, &SplitSpec { seed: 2, ..SplitSpec::default() }).unwrap();
        let again = stratified_split(&ds, &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap();
        assert_eq!(a, again);
        assert_ne!(a.test.stories, b.test.stories);
        for skill in Skill::ALL {
            assert_eq!(counts(&a.val, skill), counts(&b.val, skill));
            assert_eq!(counts(&a.test, skill), counts(&b.test, skill));
        }
    }

    #[test]
    fn singleton_skill_goes_to_train() {
        let ds = single_skill_dataset(1);
        let split = stratified_split(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(split.train.stories.len(), 9);
        assert!(split.val.is_empty() && split.test.is_empty());
    }

    #[test]
    fn rejects_infeasible_fractions() {
        let ds = single_skill_dataset(2);
        let spec = SplitSpec {
            val_fraction: 0.5,
            test_fraction: 0.5,
            seed: 0,
        };
        assert!(matches!(
            stratified_split(&ds, &spec),
            Err(CorpusError::InvalidSplit(_))
        ));
    }
}

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillforge_core::backend::{BackendError, IdPair, LossStats, Seq2SeqBackend, TokenId};
use skillforge_core::corpus::{QaPair, QuestionType, Skill, Story};
use skillforge_core::seqformat::{SequenceFormat, SpecialTokens};
use skillforge_modelkit::{
    create_backend, run_recipe, stage_dir, tiny_vocab, train_stage, CorpusBindings, RecipeError, RecipeName,
    RunOptions, StageRecipe, TinyBackend, TinyConfig, TrainConfig, TrainReport,
};

/// Random sequences copied verbatim from encoder to decoder.
fn copy_task(n: usize, seed: u64, eos: TokenId, first: TokenId, vocab: TokenId) -> Vec<IdPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..7);
            let mut seq: Vec<TokenId> = (0..len).map(|_| rng.gen_range(first..vocab)).collect();
            seq.push(eos);
            IdPair {
                encoder: seq.clone(),
                decoder: seq,
            }
        })
        .collect()
}

/// Mean NLL of the maximum-likelihood table from the aligned source token
/// to the target token, fitted on `data` itself.
fn aligned_table_loss(data: &[IdPair]) -> f64 {
    let mut counts: HashMap<(TokenId, TokenId), f64> = HashMap::new();
    let mut totals: HashMap<TokenId, f64> = HashMap::new();
    for p in data {
        for (&s, &t) in p.encoder.iter().zip(&p.decoder) {
            *counts.entry((s, t)).or_default() += 1.0;
            *totals.entry(s).or_default() += 1.0;
        }
    }
    let mut nll = 0.0;
    let mut n = 0.0;
    for p in data {
        for (&s, &t) in p.encoder.iter().zip(&p.decoder) {
            nll -= (counts[&(s, t)] / totals[&s]).ln();
            n += 1.0;
        }
    }
    nll / n
}

#[test]
fn copy_task_is_learned() {
    let tokens = SpecialTokens::default();
    let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
    let text = words.join(" ");
    let vocab = tiny_vocab([text.as_str()], &tokens, true);
    let first = vocab.id("w0").unwrap().min(vocab.id("w9").unwrap());
    let eos = vocab.id(&tokens.eos).unwrap();
    let mut backend = TinyBackend::new(TinyConfig::default(), vocab.clone(), &tokens.eos).unwrap();
    let v = first + 10;
    let train = copy_task(200, 1, eos, first, v);
    let val = copy_task(40, 2, eos, first, v);

    // A lookup table fits the task exactly, so it is learnable in principle.
    assert_eq!(aligned_table_loss(&train), 0.0);

    let config = TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 10,
        patience: 2,
        ..TrainConfig::default()
    };
    let report = train_stage(&mut backend, &train, &val, &config).unwrap();
    let first_epoch = report.epochs[0].train_loss;
    let last = report.epochs.last().unwrap().train_loss;
    assert!(last < 0.1 * first_epoch, "epoch losses {:?}", report.epochs);
}

fn strip_clock(mut r: TrainReport) -> TrainReport {
    r.wall_clock_seconds = 0.0;
    r
}

#[test]
fn identical_seeds_give_identical_reports() {
    let tokens = SpecialTokens::default();
    let run = || {
        let vocab = tiny_vocab(["a b c d e f"], &tokens, true);
        let eos = vocab.id("</s>").unwrap();
        let first = vocab.id("a").unwrap();
        let mut backend = TinyBackend::new(TinyConfig::default(), vocab, "</s>").unwrap();
        let train = copy_task(40, 3, eos, first, first + 6);
        let val = copy_task(10, 4, eos, first, first + 6);
        let config = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let report = train_stage(&mut backend, &train, &val, &config).unwrap();
        (strip_clock(report), backend.snapshot())
    };
    assert_eq!(run(), run());
}

/// Backend whose validation loss follows a script; its "parameters" are the
/// number of optimizer steps taken.
struct Scripted {
    losses: Vec<f64>,
    calls: AtomicUsize,
    steps: u64,
}

impl Seq2SeqBackend for Scripted {
    fn kind(&self) -> &'static str {
        "scripted"
    }
    fn vocab_size(&self) -> usize {
        2
    }
    fn tokenize(&self, _: &str) -> Vec<TokenId> {
        vec![1]
    }
    fn detokenize(&self, _: &[TokenId]) -> String {
        String::new()
    }
    fn token_id(&self, _: &str) -> Option<TokenId> {
        None
    }
    fn eos_id(&self) -> TokenId {
        1
    }
    fn register_special_tokens(&mut self, _: &[&str]) -> Result<(), BackendError> {
        Ok(())
    }
    fn loss(&self, _: &[IdPair]) -> Result<LossStats, BackendError> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(LossStats {
            nll_sum: self.losses[i],
            tokens: 1,
        })
    }
    fn accumulate_gradients(&mut self, batch: &[IdPair]) -> Result<LossStats, BackendError> {
        Ok(LossStats {
            nll_sum: 1.0,
            tokens: batch.len(),
        })
    }
    fn apply_gradient_step(&mut self, _: f64) -> Result<(), BackendError> {
        self.steps += 1;
        Ok(())
    }
    fn reset_optimizer(&mut self) {}
    fn next_token_distribution(&self, _: &[TokenId], _: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        Ok(vec![0.0, 1.0])
    }
    fn snapshot(&self) -> Vec<u8> {
        self.steps.to_le_bytes().to_vec()
    }
    fn restore(&mut self, s: &[u8]) -> Result<(), BackendError> {
        self.steps = u64::from_le_bytes(s.try_into().unwrap());
        Ok(())
    }
}

#[test]
fn early_stopping_restores_best_epoch() {
    let one = IdPair {
        encoder: vec![1],
        decoder: vec![1],
    };
    let mut b = Scripted {
        losses: vec![2.0, 1.5, 1.6],
        calls: AtomicUsize::new(0),
        steps: 0,
    };
    let config = TrainConfig {
        batch_size: 1,
        ..TrainConfig::default()
    };
    let report = train_stage(&mut b, &[one.clone()], &[one], &config).unwrap();
    assert_eq!((report.stopped_epoch, report.best_epoch), (3, 2));
    assert_eq!(report.best_val_loss, 1.5);
    // One step per epoch; the epoch-2 parameters have seen two steps.
    assert_eq!(b.steps, 2);
}

fn story(id: &str, skills: &[Skill]) -> Story {
    Story {
        id: id.into(),
        text: format!("{id} went to the park and saw a dog ."),
        genre: None,
        pairs: skills
            .iter()
            .enumerate()
            .map(|(i, &s)| QaPair {
                id: format!("{id}-{i}"),
                question: format!("what did {id} see ?"),
                answer: "a dog".into(),
                skill: Some(s),
                qtype: Some(QuestionType::Literal),
            })
            .collect(),
    }
}

fn small_setup() -> (Box<dyn Seq2SeqBackend>, SequenceFormat, CorpusBindings, TrainConfig) {
    let tokens = SpecialTokens::default();
    let ext: Vec<Story> = (0..6).map(|i| story(&format!("x{i}"), &[])).map(|mut s| {
        s.pairs.push(QaPair {
            id: format!("{}-q", s.id),
            question: "where did it go ?".into(),
            answer: "the park".into(),
            skill: None,
            qtype: None,
        });
        s
    }).collect();
    let skill: Vec<Story> = (0..6).map(|i| story(&format!("s{i}"), &[Skill::Visualizing, Skill::Summarizing])).collect();
    let mut texts: Vec<String> = Vec::new();
    for s in ext.iter().chain(&skill) {
        texts.push(s.text.clone());
        for p in &s.pairs {
            texts.push(p.question.clone());
            texts.push(p.answer.clone());
        }
    }
    let backend = create_backend(
        "tiny",
        texts.iter().map(String::as_str),
        &tokens,
        &TinyConfig {
            d_model: 8,
            d_ff: 8,
            ..TinyConfig::default()
        },
    )
    .unwrap();
    let bindings = CorpusBindings {
        external_train: ext[..4].to_vec(),
        external_val: ext[4..].to_vec(),
        skill_train: skill[..4].to_vec(),
        skill_val: skill[4..].to_vec(),
    };
    let config = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    (backend, SequenceFormat::new(tokens).unwrap(), bindings, config)
}

#[test]
fn empty_second_stage_fails_after_first_is_saved() {
    let (mut backend, format, mut bindings, config) = small_setup();
    bindings.skill_train.clear();
    let dir = tempfile::tempdir().unwrap();
    let recipe = StageRecipe::standard(RecipeName::HtaWta, &config);
    let err = run_recipe(
        backend.as_mut(),
        &recipe,
        &bindings,
        &format,
        &RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            ..RunOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, RecipeError::MissingCorpus { stage: 2, .. }), "{err}");
    assert!(stage_dir(dir.path(), 1).join("weights.bin").is_file());
    assert!(stage_dir(dir.path(), 1).join("report.json").is_file());
    assert!(dir.path().join("recipe.json").is_file());
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let recipe_for = |c: &TrainConfig| StageRecipe::standard(RecipeName::HtaWta, c);

    let full = tempfile::tempdir().unwrap();
    let (mut b, format, bindings, config) = small_setup();
    let opts = RunOptions {
        out_dir: Some(full.path().to_path_buf()),
        ..RunOptions::default()
    };
    let out = run_recipe(b.as_mut(), &recipe_for(&config), &bindings, &format, &opts).unwrap();
    assert_eq!(out.reports.len(), 2);

    let split = tempfile::tempdir().unwrap();
    let (mut b1, format, bindings, config) = small_setup();
    let opts = RunOptions {
        out_dir: Some(split.path().to_path_buf()),
        stop_after: Some(1),
        ..RunOptions::default()
    };
    run_recipe(b1.as_mut(), &recipe_for(&config), &bindings, &format, &opts).unwrap();
    assert!(!stage_dir(split.path(), 2).exists());
    let (mut b2, format, bindings, config) = small_setup();
    let opts = RunOptions {
        out_dir: Some(split.path().to_path_buf()),
        resume: true,
        ..RunOptions::default()
    };
    let resumed = run_recipe(b2.as_mut(), &recipe_for(&config), &bindings, &format, &opts).unwrap();
    assert_eq!(resumed.resumed, vec![1]);
    for stage in [1, 2] {
        let a = std::fs::read(stage_dir(full.path(), stage).join("weights.bin")).unwrap();
        let b = std::fs::read(stage_dir(split.path(), stage).join("weights.bin")).unwrap();
        assert!(a == b, "stage {stage} weights differ");
    }
}

#[test]
fn single_stage_recipes_run_one_stage() {
    for name in [RecipeName::T5Wta, RecipeName::OneStep, RecipeName::WtaUnskilled] {
        let (mut b, format, bindings, config) = small_setup();
        let recipe = StageRecipe::standard(name, &config);
        let out = run_recipe(b.as_mut(), &recipe, &bindings, &format, &RunOptions::default()).unwrap();
        assert_eq!(out.reports.len(), 1, "{name}");
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillforge_core::backend::{IdPair, Seq2SeqBackend, TokenId};
use skillforge_core::seqformat::SpecialTokens;
use skillforge_modelkit::{tiny_vocab, TinyBackend, TinyConfig};

fn small_backend(config: TinyConfig) -> TinyBackend {
    let tokens = SpecialTokens::default();
    let vocab = tiny_vocab(["a b c d e f g h"], &tokens, config.atomic_special_tokens);
    TinyBackend::new(config, vocab, &tokens.eos).unwrap()
}

fn random_pair(rng: &mut ChaCha8Rng, vocab: usize, eos: TokenId) -> IdPair {
    let mut seq = |n: usize| {
        let mut v: Vec<TokenId> = (0..n).map(|_| rng.gen_range(2..vocab as TokenId)).collect();
        v.push(eos);
        v
    };
    let enc = seq(5);
    let dec = seq(4);
    IdPair {
        encoder: enc,
        decoder: dec,
    }
}

/// Relative error between central finite differences and the analytic
/// gradient, per parameter group.
#[test]
fn gradients_match_finite_differences() {
    let config = TinyConfig {
        d_model: 8,
        heads: 2,
        d_ff: 12,
        ..TinyConfig::default()
    };
    let mut backend = small_backend(config);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = backend.vocab_size();
    let batch = vec![random_pair(&mut rng, v, backend.eos_id()), random_pair(&mut rng, v, backend.eos_id())];
    let (_, grads) = backend.gradients(&batch).unwrap();
    let h = 1e-5;
    let names = backend.parameter_names().to_vec();
    for (pi, name) in names.iter().enumerate() {
        let mut num = Vec::new();
        for k in 0..backend.parameters()[pi].len() {
            let orig = backend.parameters()[pi].data[k];
            backend.parameters_mut()[pi].data[k] = orig + h;
            let plus = backend.loss(&batch).unwrap().nll_sum;
            backend.parameters_mut()[pi].data[k] = orig - h;
            let minus = backend.loss(&batch).unwrap().nll_sum;
            backend.parameters_mut()[pi].data[k] = orig;
            num.push((plus - minus) / (2.0 * h));
        }
        let ana = &grads[pi].data;
        let diff: f64 = num.iter().zip(ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = num.iter().map(|a| a * a).sum::<f64>().sqrt().max(ana.iter().map(|a| a * a).sum::<f64>().sqrt());
        if scale < 1e-10 {
            continue;
        }
        assert!(diff / scale < 1e-3, "{name}: relative error {}", diff / scale);
    }
}

#[test]
fn untrained_loss_is_near_log_vocab() {
    let backend = small_backend(TinyConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v = backend.vocab_size();
    let batch: Vec<IdPair> = (0..64)
        .map(|_| {
            let encoder: Vec<TokenId> = (0..6).map(|_| rng.gen_range(0..v as TokenId)).collect();
            let decoder: Vec<TokenId> = (0..6).map(|_| rng.gen_range(0..v as TokenId)).collect();
            IdPair { encoder, decoder }
        })
        .collect();
    let mean = backend.loss(&batch).unwrap().mean();
    let expected = (v as f64).ln();
    assert!((mean - expected).abs() < 0.1 * expected, "{mean} vs ln V = {expected}");
}

#[test]
fn distributions_are_normalized() {
    let backend = small_backend(TinyConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let p = random_pair(&mut rng, backend.vocab_size(), backend.eos_id());
        let prefix = &p.decoder[..rng.gen_range(0..p.decoder.len())];
        let dist = backend.next_token_distribution(&p.encoder, prefix).unwrap();
        assert_eq!(dist.len(), backend.vocab_size());
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(dist.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn snapshot_restore_is_bitwise_faithful() {
    let mut backend = small_backend(TinyConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let probe = random_pair(&mut rng, backend.vocab_size(), backend.eos_id());
    let before = backend.next_token_distribution(&probe.encoder, &probe.decoder[..2]).unwrap();
    let snap = backend.snapshot();
    backend.accumulate_gradients(std::slice::from_ref(&probe)).unwrap();
    backend.apply_gradient_step(0.05).unwrap();
    let moved = backend.next_token_distribution(&probe.encoder, &probe.decoder[..2]).unwrap();
    assert_ne!(before, moved);
    backend.restore(&snap).unwrap();
    let after = backend.next_token_distribution(&probe.encoder, &probe.decoder[..2]).unwrap();
    assert_eq!(before, after);
    let reloaded = TinyBackend::from_snapshot(&snap).unwrap();
    assert_eq!(reloaded.next_token_distribution(&probe.encoder, &probe.decoder[..2]).unwrap(), before);
    assert_eq!(reloaded.snapshot(), snap);
}

#[test]
fn corrupt_snapshots_are_rejected() {
    let mut backend = small_backend(TinyConfig::default());
    let snap = backend.snapshot();
    assert!(backend.restore(&snap[..snap.len() - 8]).is_err());
    assert!(backend.restore(b"nonsense").is_err());
    let other = small_backend(TinyConfig {
        d_model: 16,
        ..TinyConfig::default()
    });
    assert!(backend.restore(&other.snapshot()).is_err());
}

#[test]
fn special_tokens_atomic_or_spelled() {
    let tokens = SpecialTokens::default();
    let atomic = small_backend(TinyConfig::default());
    let spelled = small_backend(TinyConfig {
        atomic_special_tokens: false,
        ..TinyConfig::default()
    });
    let text = "<FL> a b <as> c </s>";
    for t in tokens.all() {
        assert_eq!(atomic.tokenize(t).len(), 1, "{t}");
    }
    assert_eq!(spelled.tokenize("<FL>").len(), 4);
    assert_eq!(spelled.tokenize("</s>"), vec![spelled.eos_id()]);
    for b in [&atomic, &spelled] {
        assert_eq!(b.detokenize(&b.tokenize(text)), text);
    }
}

#[test]
fn registering_new_tokens_grows_the_vocabulary() {
    let mut backend = small_backend(TinyConfig::default());
    let v = backend.vocab_size();
    backend.register_special_tokens(&["<NEW>"]).unwrap();
    assert_eq!(backend.vocab_size(), v + 1);
    assert_eq!(backend.tokenize("<NEW>").len(), 1);
    let dist = backend.next_token_distribution(&[backend.eos_id()], &[]).unwrap();
    assert_eq!(dist.len(), v + 1);
    backend.register_special_tokens(&["<NEW>"]).unwrap();
    assert_eq!(backend.vocab_size(), v + 1);
}

#[test]
fn out_of_range_ids_are_errors() {
    let backend = small_backend(TinyConfig::default());
    let bad = IdPair {
        encoder: vec![9999],
        decoder: vec![backend.eos_id()],
    };
    assert!(backend.loss(&[bad]).is_err());
    assert!(backend.loss(&[IdPair { encoder: vec![2], decoder: vec![] }]).is_err());
}

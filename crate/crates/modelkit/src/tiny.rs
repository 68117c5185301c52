//! Tiny from-scratch encoder-decoder transformer.
//!
//! Pre-norm layers, sinusoidal positions, multi-head attention, ReLU
//! feed-forward blocks and a linear output head, trained with Adam. Every
//! example is differentiated on its own tape; batch gradients are summed in
//! example order, so results do not depend on the thread count.

use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use skillforge_core::backend::{BackendError, IdPair, LossStats, Seq2SeqBackend, TokenId};

use crate::adam::Adam;
use crate::tape::{row_softmax, NodeId, Tape, Tensor};
use crate::vocab::Vocab;

pub const KIND: &str = "tiny";
const MAGIC: &[u8; 8] = b"SKFTINY1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TinyConfig {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Register special tokens as single vocabulary entries. When false
    /// they are spelled out as character pieces (the end-of-sequence token
    /// always stays atomic).
    pub atomic_special_tokens: bool,
    pub seed: u64,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            d_model: 32,
            heads: 2,
            d_ff: 64,
            encoder_layers: 1,
            decoder_layers: 1,
            atomic_special_tokens: true,
            seed: 13,
        }
    }
}

impl TinyConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 || self.d_model % self.heads != 0 {
            return Err(BackendError::Other(format!(
                "d_model {} must be positive and divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return Err(BackendError::Other("at least one encoder and one decoder layer".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct AttnIdx {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Clone, Copy)]
struct NormIdx {
    g: usize,
    b: usize,
}

#[derive(Clone, Copy)]
struct FfIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone)]
struct EncLayer {
    ln1: NormIdx,
    attn: AttnIdx,
    ln2: NormIdx,
    ff: FfIdx,
}

#[derive(Clone)]
struct DecLayer {
    ln1: NormIdx,
    self_attn: AttnIdx,
    ln2: NormIdx,
    cross: AttnIdx,
    ln3: NormIdx,
    ff: FfIdx,
}

#[derive(Clone)]
struct Layout {
    embed: usize,
    enc: Vec<EncLayer>,
    enc_norm: NormIdx,
    dec: Vec<DecLayer>,
    dec_norm: NormIdx,
    out_w: usize,
    out_b: usize,
}

enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

struct Builder<'a> {
    names: Vec<String>,
    params: Vec<Tensor>,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let data = match init {
            Init::Normal(std) => {
                let n = Normal::new(0.0, std).expect("valid std");
                (0..rows * cols).map(|_| n.sample(self.rng)).collect()
            }
            Init::Zeros => vec![0.0; rows * cols],
            Init::Ones => vec![1.0; rows * cols],
        };
        self.names.push(name);
        self.params.push(Tensor::from_vec(rows, cols, data));
        self.params.len() - 1
    }

    fn norm(&mut self, name: &str, d: usize) -> NormIdx {
        NormIdx {
            g: self.add(format!("{name}.gain"), 1, d, Init::Ones),
            b: self.add(format!("{name}.bias"), 1, d, Init::Zeros),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> AttnIdx {
        let std = 1.0 / (d as f64).sqrt();
        AttnIdx {
            wq: self.add(format!("{name}.wq"), d, d, Init::Normal(std)),
            wk: self.add(format!("{name}.wk"), d, d, Init::Normal(std)),
            wv: self.add(format!("{name}.wv"), d, d, Init::Normal(std)),
            wo: self.add(format!("{name}.wo"), d, d, Init::Normal(std)),
            bo: self.add(format!("{name}.bo"), 1, d, Init::Zeros),
        }
    }

    fn ff(&mut self, name: &str, d: usize, f: usize) -> FfIdx {
        FfIdx {
            w1: self.add(format!("{name}.w1"), d, f, Init::Normal(1.0 / (d as f64).sqrt())),
            b1: self.add(format!("{name}.b1"), 1, f, Init::Zeros),
            w2: self.add(format!("{name}.w2"), f, d, Init::Normal(1.0 / (f as f64).sqrt())),
            b2: self.add(format!("{name}.b2"), 1, d, Init::Zeros),
        }
    }
}

fn build_params(config: &TinyConfig, vocab_size: usize) -> (Layout, Vec<String>, Vec<Tensor>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.d_model;
    let mut b = Builder {
        names: Vec::new(),
        params: Vec::new(),
        rng: &mut rng,
    };
    let embed = b.add("embed".into(), vocab_size, d, Init::Normal(1.0));
    let enc = (0..config.encoder_layers)
        .map(|l| EncLayer {
            ln1: b.norm(&format!("enc{l}.ln1"), d),
            attn: b.attn(&format!("enc{l}.attn"), d),
            ln2: b.norm(&format!("enc{l}.ln2"), d),
            ff: b.ff(&format!("enc{l}.ff"), d, config.d_ff),
        })
        .collect();
    let enc_norm = b.norm("enc.norm", d);
    let dec = (0..config.decoder_layers)
        .map(|l| DecLayer {
            ln1: b.norm(&format!("dec{l}.ln1"), d),
            self_attn: b.attn(&format!("dec{l}.self"), d),
            ln2: b.norm(&format!("dec{l}.ln2"), d),
            cross: b.attn(&format!("dec{l}.cross"), d),
            ln3: b.norm(&format!("dec{l}.ln3"), d),
            ff: b.ff(&format!("dec{l}.ff"), d, config.d_ff),
        })
        .collect();
    let dec_norm = b.norm("dec.norm", d);
    let out_w = b.add("out.w".into(), d, vocab_size, Init::Normal(0.02));
    let out_b = b.add("out.b".into(), 1, vocab_size, Init::Zeros);
    let layout = Layout {
        embed,
        enc,
        enc_norm,
        dec,
        dec_norm,
        out_w,
        out_b,
    };
    (layout, b.names, b.params)
}

fn positions(n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(n, d);
    for pos in 0..n {
        for i in 0..d {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * rate;
            t.data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    kind: String,
    config: TinyConfig,
    eos: String,
    vocab: Vec<String>,
    shapes: Vec<(String, usize, usize)>,
}

pub struct TinyBackend {
    config: TinyConfig,
    vocab: Vocab,
    layout: Layout,
    names: Vec<String>,
    params: Vec<Tensor>,
    grads: Vec<Tensor>,
    grad_tokens: usize,
    adam: Adam,
    eos: TokenId,
    /// Encoder output of the most recent inference call.
    memory_cache: Mutex<Option<(Vec<TokenId>, Tensor)>>,
}

impl TinyBackend {
    /// `vocab` must contain `eos`.
    pub fn new(config: TinyConfig, vocab: Vocab, eos: &str) -> Result<TinyBackend, BackendError> {
        config.validate()?;
        let eos = vocab
            .id(eos)
            .ok_or_else(|| BackendError::Other(format!("vocabulary lacks end-of-sequence token {eos:?}")))?;
        let (layout, names, params) = build_params(&config, vocab.len());
        let grads = params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect();
        let adam = Adam::new(&params);
        Ok(TinyBackend {
            config,
            vocab,
            layout,
            names,
            params,
            grads,
            grad_tokens: 0,
            adam,
            eos,
            memory_cache: Mutex::new(None),
        })
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<TinyBackend, BackendError> {
        let (header, values) = parse_snapshot(bytes)?;
        let vocab = Vocab::from_tokens(header.vocab.clone());
        let config = header.config.clone();
        config.validate()?;
        let (layout, names, mut params) = build_params(&config, vocab.len());
        load_values(&header, values, &names, &mut params)?;
        let eos_id = vocab
            .id(&header.eos)
            .ok_or_else(|| BackendError::InvalidSnapshot("end-of-sequence token missing from vocabulary".into()))?;
        let grads = params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect();
        let adam = Adam::new(&params);
        Ok(TinyBackend {
            config,
            vocab,
            layout,
            names,
            params,
            grads,
            grad_tokens: 0,
            adam,
            eos: eos_id,
            memory_cache: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &TinyConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        self.invalidate_cache();
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn invalidate_cache(&self) {
        *self.memory_cache.lock().expect("cache lock") = None;
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<(), BackendError> {
        match ids.iter().find(|&&id| id as usize >= self.vocab.len()) {
            Some(&bad) => Err(BackendError::UnknownTokenId(bad)),
            None => Ok(()),
        }
    }

    fn attention(&self, t: &mut Tape, p: &[NodeId], xq: NodeId, xkv: NodeId, a: AttnIdx, causal: bool) -> NodeId {
        let dh = self.config.d_model / self.config.heads;
        let q = t.matmul(xq, p[a.wq]);
        let k = t.matmul(xkv, p[a.wk]);
        let v = t.matmul(xkv, p[a.wv]);
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<NodeId> = (0..self.config.heads)
            .map(|h| {
                let qh = t.slice_cols(q, h * dh, dh);
                let kh = t.slice_cols(k, h * dh, dh);
                let vh = t.slice_cols(v, h * dh, dh);
                let s = t.matmul_bt(qh, kh);
                let s = t.scale(s, scale);
                let w = t.softmax(s, causal);
                t.matmul(w, vh)
            })
            .collect();
        let o = if heads.len() == 1 { heads[0] } else { t.concat_cols(&heads) };
        let o = t.matmul(o, p[a.wo]);
        t.add_row(o, p[a.bo])
    }

    fn feed_forward(&self, t: &mut Tape, p: &[NodeId], x: NodeId, f: FfIdx) -> NodeId {
        let h = t.matmul(x, p[f.w1]);
        let h = t.add_row(h, p[f.b1]);
        let h = t.relu(h);
        let h = t.matmul(h, p[f.w2]);
        t.add_row(h, p[f.b2])
    }

    fn norm(&self, t: &mut Tape, p: &[NodeId], x: NodeId, n: NormIdx) -> NodeId {
        t.layer_norm(x, p[n.g], p[n.b])
    }

    fn embed(&self, t: &mut Tape, p: &[NodeId], ids: &[TokenId]) -> NodeId {
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let e = t.embed(p[self.layout.embed], &idx);
        let pe = t.constant(positions(ids.len(), self.config.d_model));
        t.add(e, pe)
    }

    fn encode(&self, t: &mut Tape, p: &[NodeId], encoder: &[TokenId]) -> NodeId {
        let mut x = self.embed(t, p, encoder);
        for layer in &self.layout.enc {
            let n = self.norm(t, p, x, layer.ln1);
            let a = self.attention(t, p, n, n, layer.attn, false);
            x = t.add(x, a);
            let n = self.norm(t, p, x, layer.ln2);
            let f = self.feed_forward(t, p, n, layer.ff);
            x = t.add(x, f);
        }
        self.norm(t, p, x, self.layout.enc_norm)
    }

    /// Logits for every position of `decoder_input`.
    fn decode(&self, t: &mut Tape, p: &[NodeId], memory: NodeId, decoder_input: &[TokenId]) -> NodeId {
        let mut y = self.embed(t, p, decoder_input);
        for layer in &self.layout.dec {
            let n = self.norm(t, p, y, layer.ln1);
            let a = self.attention(t, p, n, n, layer.self_attn, true);
            y = t.add(y, a);
            let n = self.norm(t, p, y, layer.ln2);
            let c = self.attention(t, p, n, memory, layer.cross, false);
            y = t.add(y, c);
            let n = self.norm(t, p, y, layer.ln3);
            let f = self.feed_forward(t, p, n, layer.ff);
            y = t.add(y, f);
        }
        let y = self.norm(t, p, y, self.layout.dec_norm);
        let logits = t.matmul(y, p[self.layout.out_w]);
        t.add_row(logits, p[self.layout.out_b])
    }

    fn decoder_input(&self, targets: &[TokenId]) -> Vec<TokenId> {
        let mut input = Vec::with_capacity(targets.len());
        input.push(self.vocab.pad_id());
        input.extend_from_slice(&targets[..targets.len() - 1]);
        input
    }

    fn validate_pair(&self, pair: &IdPair) -> Result<(), BackendError> {
        if pair.encoder.is_empty() || pair.decoder.is_empty() {
            return Err(BackendError::InvalidBatch("empty encoder or decoder sequence".into()));
        }
        self.check_ids(&pair.encoder)?;
        self.check_ids(&pair.decoder)
    }

    /// Summed NLL of one pair; with `grad`, also its parameter gradients.
    fn example(&self, pair: &IdPair, grad: bool) -> (f64, Option<Vec<Option<Tensor>>>) {
        let mut t = Tape::new(self.params.len());
        let p: Vec<NodeId> = self.params.iter().enumerate().map(|(i, v)| t.param(i, v)).collect();
        let memory = self.encode(&mut t, &p, &pair.encoder);
        let logits = self.decode(&mut t, &p, memory, &self.decoder_input(&pair.decoder));
        let targets: Vec<usize> = pair.decoder.iter().map(|&i| i as usize).collect();
        let loss = t.cross_entropy(logits, &targets);
        let nll = t.value(loss).data[0];
        (nll, grad.then(|| t.backward(loss)))
    }

    /// Summed NLL of `batch` and its gradient for every parameter, without
    /// touching the accumulator.
    pub fn gradients(&self, batch: &[IdPair]) -> Result<(LossStats, Vec<Tensor>), BackendError> {
        for pair in batch {
            self.validate_pair(pair)?;
        }
        let per_example: Vec<(f64, Option<Vec<Option<Tensor>>>)> =
            batch.par_iter().map(|pair| self.example(pair, true)).collect();
        let mut total: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect();
        let mut stats = LossStats::default();
        for (pair, (nll, grads)) in batch.iter().zip(per_example) {
            stats.nll_sum += nll;
            stats.tokens += pair.decoder.len();
            for (acc, g) in total.iter_mut().zip(grads.expect("gradients requested")) {
                if let Some(g) = g {
                    for (a, v) in acc.data.iter_mut().zip(&g.data) {
                        *a += v;
                    }
                }
            }
        }
        if !stats.nll_sum.is_finite() {
            return Err(BackendError::NonFinite);
        }
        Ok((stats, total))
    }

    fn memory_for(&self, encoder: &[TokenId]) -> Tensor {
        if let Some((ids, mem)) = self.memory_cache.lock().expect("cache lock").as_ref() {
            if ids == encoder {
                return mem.clone();
            }
        }
        let mut t = Tape::new(self.params.len());
        let p: Vec<NodeId> = self.params.iter().enumerate().map(|(i, v)| t.param(i, v)).collect();
        let m = self.encode(&mut t, &p, encoder);
        let mem = t.value(m).clone();
        *self.memory_cache.lock().expect("cache lock") = Some((encoder.to_vec(), mem.clone()));
        mem
    }

    fn grow_vocab(&mut self, token: &str) {
        let id = self.vocab.push(token.to_string()) as usize;
        let d = self.config.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let normal = |std: f64, rng: &mut ChaCha8Rng| Normal::new(0.0, std).expect("valid std").sample(rng);
        let embed = &mut self.params[self.layout.embed];
        embed.data.extend((0..d).map(|_| normal(1.0, &mut rng)));
        embed.rows += 1;
        let out = &mut self.params[self.layout.out_w];
        let old_cols = out.cols;
        let mut data = Vec::with_capacity(out.rows * (old_cols + 1));
        for r in 0..out.rows {
            data.extend_from_slice(&out.data[r * old_cols..(r + 1) * old_cols]);
            data.push(normal(0.02, &mut rng));
        }
        out.data = data;
        out.cols += 1;
        let bias = &mut self.params[self.layout.out_b];
        bias.data.push(0.0);
        bias.cols += 1;
        self.grads = self.params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect();
        self.grad_tokens = 0;
        self.adam = Adam::new(&self.params);
        self.invalidate_cache();
    }

    fn header(&self) -> SnapshotHeader {
        SnapshotHeader {
            kind: KIND.into(),
            config: self.config.clone(),
            eos: self.vocab.token(self.eos).unwrap_or_default().to_string(),
            vocab: self.vocab.tokens().to_vec(),
            shapes: self
                .names
                .iter()
                .zip(&self.params)
                .map(|(n, p)| (n.clone(), p.rows, p.cols))
                .collect(),
        }
    }
}

fn parse_snapshot(bytes: &[u8]) -> Result<(SnapshotHeader, &[u8]), BackendError> {
    let bad = |m: &str| BackendError::InvalidSnapshot(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: SnapshotHeader =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| BackendError::InvalidSnapshot(e.to_string()))?;
    if header.kind != KIND {
        return Err(bad("not a tiny-backend snapshot"));
    }
    Ok((header, &bytes[header_end..]))
}

fn load_values(header: &SnapshotHeader, values: &[u8], names: &[String], params: &mut [Tensor]) -> Result<(), BackendError> {
    if header.shapes.len() != params.len() {
        return Err(BackendError::InvalidSnapshot("parameter count mismatch".into()));
    }
    for ((name, rows, cols), (expected, p)) in header.shapes.iter().zip(names.iter().zip(params.iter())) {
        if name != expected || *rows != p.rows || *cols != p.cols {
            return Err(BackendError::InvalidSnapshot(format!("unexpected parameter {name}")));
        }
    }
    let total: usize = params.iter().map(Tensor::len).sum();
    if values.len() != total * 8 {
        return Err(BackendError::InvalidSnapshot(format!(
            "expected {} value bytes, found {}",
            total * 8,
            values.len()
        )));
    }
    let mut chunks = values.chunks_exact(8);
    for p in params.iter_mut() {
        for v in &mut p.data {
            *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
        }
    }
    Ok(())
}

impl Seq2SeqBackend for TinyBackend {
    fn kind(&self) -> &'static str {
        KIND
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        self.vocab.encode(text)
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        self.vocab.decode(ids)
    }

    fn token_id(&self, token: &str) -> Option<TokenId> {
        self.vocab.id(token)
    }

    fn eos_id(&self) -> TokenId {
        self.eos
    }

    fn register_special_tokens(&mut self, tokens: &[&str]) -> Result<(), BackendError> {
        if !self.config.atomic_special_tokens {
            return Ok(());
        }
        for token in tokens {
            if token.split_whitespace().count() != 1 || token.split_whitespace().next() != Some(token) {
                return Err(BackendError::Other(format!("special token {token:?} must be one word")));
            }
            if self.vocab.id(token).is_none() {
                self.grow_vocab(token);
            }
        }
        Ok(())
    }

    fn loss(&self, batch: &[IdPair]) -> Result<LossStats, BackendError> {
        for pair in batch {
            self.validate_pair(pair)?;
        }
        let nlls: Vec<f64> = batch.par_iter().map(|pair| self.example(pair, false).0).collect();
        let stats = LossStats {
            nll_sum: nlls.iter().sum(),
            tokens: batch.iter().map(|p| p.decoder.len()).sum(),
        };
        if !stats.nll_sum.is_finite() {
            return Err(BackendError::NonFinite);
        }
        Ok(stats)
    }

    fn accumulate_gradients(&mut self, batch: &[IdPair]) -> Result<LossStats, BackendError> {
        let (stats, grads) = self.gradients(batch)?;
        for (acc, g) in self.grads.iter_mut().zip(grads) {
            for (a, v) in acc.data.iter_mut().zip(g.data) {
                *a += v;
            }
        }
        self.grad_tokens += stats.tokens;
        Ok(stats)
    }

    fn apply_gradient_step(&mut self, learning_rate: f64) -> Result<(), BackendError> {
        if self.grad_tokens == 0 {
            return Err(BackendError::InvalidBatch("no accumulated gradients".into()));
        }
        let scale = 1.0 / self.grad_tokens as f64;
        for g in &mut self.grads {
            for v in &mut g.data {
                *v *= scale;
                if !v.is_finite() {
                    return Err(BackendError::NonFinite);
                }
            }
        }
        self.adam.step(&mut self.params, &self.grads, learning_rate);
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
        self.grad_tokens = 0;
        self.invalidate_cache();
        Ok(())
    }

    fn reset_optimizer(&mut self) {
        self.adam = Adam::new(&self.params);
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
        self.grad_tokens = 0;
    }

    fn next_token_distribution(&self, encoder: &[TokenId], decoder_prefix: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        if encoder.is_empty() {
            return Err(BackendError::InvalidBatch("empty encoder sequence".into()));
        }
        self.check_ids(encoder)?;
        self.check_ids(decoder_prefix)?;
        let memory = self.memory_for(encoder);
        let mut t = Tape::new(self.params.len());
        let p: Vec<NodeId> = self.params.iter().enumerate().map(|(i, v)| t.param(i, v)).collect();
        let m = t.constant(memory);
        let mut input = Vec::with_capacity(decoder_prefix.len() + 1);
        input.push(self.vocab.pad_id());
        input.extend_from_slice(decoder_prefix);
        let logits = self.decode(&mut t, &p, m, &input);
        let all = t.value(logits);
        let last = Tensor::from_vec(1, all.cols, all.row(all.rows - 1).to_vec());
        let probs = row_softmax(&last).data;
        if probs.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::NonFinite);
        }
        Ok(probs)
    }

    fn snapshot(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + self.parameter_count() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn restore(&mut self, snapshot: &[u8]) -> Result<(), BackendError> {
        let (header, values) = parse_snapshot(snapshot)?;
        if header.config != self.config {
            return Err(BackendError::InvalidSnapshot("model configuration differs".into()));
        }
        if header.vocab != self.vocab.tokens() {
            return Err(BackendError::InvalidSnapshot("vocabulary differs".into()));
        }
        let mut params = self.params.clone();
        load_values(&header, values, &self.names, &mut params)?;
        self.params = params;
        self.invalidate_cache();
        Ok(())
    }
}

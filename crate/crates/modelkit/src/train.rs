//! Epoch loop with validation-loss early stopping.

use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use skillforge_core::backend::{BackendError, IdPair, Seq2SeqBackend};
use skillforge_core::seqformat::{EncodedExample, LengthBudget};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub max_encoder_tokens: usize,
    pub max_decoder_tokens: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-4,
            batch_size: 8,
            max_epochs: 10,
            patience: 1,
            max_encoder_tokens: 512,
            max_decoder_tokens: 128,
            seed: 13,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("max_encoder_tokens", self.max_encoder_tokens),
            ("max_decoder_tokens", self.max_decoder_tokens),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.patience >= self.max_epochs {
            return err(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        Ok(())
    }

    pub fn budget(&self) -> LengthBudget {
        LengthBudget {
            encoder: self.max_encoder_tokens,
            decoder: self.max_decoder_tokens,
        }
    }
}

/// Validation-loss early stopping: an epoch improves only if its loss is
/// strictly below the best so far; training stops after `patience`
/// consecutive epochs without improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records the validation loss of 1-based `epoch`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if loss >= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, loss));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// `(stopped_epoch, best_epoch)` for a sequence of per-epoch validation
/// losses.
pub fn early_stopping_outcome(val_losses: &[f64], patience: usize, max_epochs: usize) -> (usize, usize) {
    let mut es = EarlyStopping::new(patience);
    let mut stopped = 0;
    for (i, &loss) in val_losses.iter().take(max_epochs).enumerate() {
        stopped = i + 1;
        if es.observe(i + 1, loss) == StopDecision::Stop {
            break;
        }
    }
    (stopped, es.best().map_or(0, |b| b.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_examples: usize,
    pub val_examples: usize,
    pub seed: u64,
    pub wall_clock_seconds: f64,
}

/// Tokenizes rendered examples.
pub fn to_id_pairs(backend: &dyn Seq2SeqBackend, examples: &[EncodedExample]) -> Vec<IdPair> {
    examples
        .iter()
        .map(|e| IdPair {
            encoder: backend.tokenize(&e.encoder),
            decoder: backend.tokenize(&e.decoder),
        })
        .collect()
}

/// Trains until early stopping or `max_epochs`, then restores the
/// parameters of the best validation epoch.
pub fn train_stage(
    backend: &mut dyn Seq2SeqBackend,
    train: &[IdPair],
    val: &[IdPair],
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopping = EarlyStopping::new(config.patience);
    let mut best_snapshot: Option<Vec<u8>> = None;
    let mut epochs = Vec::new();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut nll = 0.0;
        let mut tokens = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<IdPair> = chunk.iter().map(|&i| train[i].clone()).collect();
            let stats = match backend.accumulate_gradients(&batch) {
                Err(BackendError::NonFinite) => return Err(TrainError::NonFinite { epoch, batch: b }),
                other => other?,
            };
            if !stats.nll_sum.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b });
            }
            match backend.apply_gradient_step(config.learning_rate) {
                Err(BackendError::NonFinite) => return Err(TrainError::NonFinite { epoch, batch: b }),
                other => other?,
            }
            nll += stats.nll_sum;
            tokens += stats.tokens;
        }
        let val_loss = backend.loss(val)?.mean();
        if !val_loss.is_finite() {
            return Err(TrainError::NonFinite { epoch, batch: 0 });
        }
        let train_loss = nll / tokens.max(1) as f64;
        info!("epoch {epoch}: train {train_loss:.4}, val {val_loss:.4}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let decision = stopping.observe(epoch, val_loss);
        if decision == StopDecision::Improved {
            best_snapshot = Some(backend.snapshot());
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    let (best_epoch, best_val_loss) = stopping.best().expect("at least one epoch");
    backend.restore(best_snapshot.as_deref().expect("snapshot of best epoch"))?;
    Ok(TrainReport {
        stopped_epoch: epochs.len(),
        best_epoch,
        best_val_loss,
        epochs,
        train_examples: train.len(),
        val_examples: val.len(),
        seed: config.seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

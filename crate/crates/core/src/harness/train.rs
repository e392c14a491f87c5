use autodiff::optim::{clip_global_norm, Adam, Optimizer, Sgd};
use autodiff::Tape;

use super::{forward, ExperimentConfig, Link, OptimizerKind, SystemVariant};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::model::{ShapeConfig, Transceiver};
use crate::seed::{derive_seed, stream};
use crate::text::{build_vocab, encode_corpus, make_batches, sequential_batches, TokenBatch, Vocabulary};

/// Vocabulary plus encoded training and validation sentences.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub vocab: Vocabulary,
    pub train: Vec<Vec<usize>>,
    pub validation: Vec<Vec<usize>>,
}

impl TrainingData {
    /// Builds the vocabulary from `lines`, keeps sentences that fit
    /// `max_len`, and holds out the last `val_fraction` of them.
    pub fn from_lines(lines: &[String], config: &ExperimentConfig) -> Result<Self> {
        let vocab = build_vocab(
            lines.iter().map(String::as_str),
            config.data.min_freq,
            config.data.max_vocab,
        )?;
        let mut encoded = encode_corpus(lines.iter().map(String::as_str), &vocab, config.shape.max_len)?;
        if let Some(cap) = config.data.max_train_sentences {
            encoded.truncate(cap);
        }
        if encoded.is_empty() {
            return Err(Error::Ingest("no training sentence survives the length filter".into()));
        }
        let n_val = (encoded.len() as f64 * config.data.val_fraction).floor() as usize;
        let n_val = n_val.min(encoded.len() - 1);
        let validation = encoded.split_off(encoded.len() - n_val);
        Ok(TrainingData {
            vocab,
            train: encoded,
            validation,
        })
    }

    pub fn with_vocab(vocab: Vocabulary, train: Vec<Vec<usize>>, validation: Vec<Vec<usize>>) -> Self {
        TrainingData {
            vocab,
            train,
            validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// `NaN` when there is no validation split.
    pub val_loss: f64,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch,mean_loss,val_loss";

    pub fn to_csv_line(&self) -> String {
        format!("{},{},{}", self.epoch, self.mean_loss, self.val_loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss, or the
    /// last epoch without a validation split.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut s = String::from(EpochLog::HEADER);
        s.push('\n');
        for e in &self.log {
            s.push_str(&e.to_csv_line());
            s.push('\n');
        }
        s
    }
}

pub fn train(
    config: &ExperimentConfig,
    variant: SystemVariant,
    data: &TrainingData,
    seed: u64,
) -> Result<TrainOutcome> {
    train_with_progress(config, variant, data, seed, |_| {})
}

/// End-to-end training at the configured training SNR with perfect CSI.
pub fn train_with_progress(
    config: &ExperimentConfig,
    variant: SystemVariant,
    data: &TrainingData,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Ingest("empty training set".into()));
    }
    let shape = ShapeConfig {
        vocab_size: data.vocab.len(),
        ..config.shape
    };
    let run_seed = config.run_seed(seed);
    let mut model = Transceiver::new(shape, derive_seed(run_seed, &[stream::INIT]))?;
    let link = Link::new(variant, config.train_snr_db, 0.0, config.ris_elements)?;
    let o = &config.optimizer;
    let mut optimizer: Box<dyn Optimizer> = match o.kind {
        OptimizerKind::Sgd => Box::new(Sgd::new(o.learning_rate, o.momentum)),
        OptimizerKind::Adam => Box::new(Adam::new(o.learning_rate)),
    };
    let validation = if data.validation.is_empty() {
        Vec::new()
    } else {
        sequential_batches(&data.validation, config.eval_batch_size)?
    };
    let fingerprint = data.vocab.fingerprint();

    let mut log = Vec::with_capacity(o.epochs);
    let mut best: Option<(f64, usize, Transceiver)> = None;
    for epoch in 1..=o.epochs {
        let batches = make_batches(
            &data.train,
            shape.batch_size,
            derive_seed(run_seed, &[stream::SHUFFLE, epoch as u64]),
        )?;
        let mut weighted = 0.0;
        let mut sentences = 0usize;
        for (step, batch) in batches.iter().enumerate() {
            let seeds: Vec<u64> = (0..batch.rows())
                .map(|r| derive_seed(run_seed, &[stream::TRAIN_LINK, epoch as u64, step as u64, r as u64]))
                .collect();
            let (loss, grads) = {
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape, true);
                let out = forward(&mut tape, &bound, batch, &link, &seeds)?;
                let loss = tape.value(out.loss).item()?;
                let grads = tape.backward(out.loss)?;
                let grads: Vec<_> = bound
                    .vars()
                    .iter()
                    .map(|&v| grads.get_or_zeros(v, tape.shape(v)))
                    .collect();
                (loss, grads)
            };
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss {loss} at epoch {epoch}, step {step}")));
            }
            let mut grads = grads;
            if o.clip_norm > 0.0 {
                let norm = clip_global_norm(&mut grads, o.clip_norm);
                if !norm.is_finite() {
                    return Err(Error::Numerical(format!(
                        "gradient norm {norm} at epoch {epoch}, step {step}"
                    )));
                }
            }
            optimizer.step(&mut model.params_mut().tensors_mut(), &grads);
            if !model.params().is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite parameters after epoch {epoch}, step {step}"
                )));
            }
            weighted += loss * batch.rows() as f64;
            sentences += batch.rows();
        }
        let val_loss = if validation.is_empty() {
            f64::NAN
        } else {
            mean_loss(&model, &validation, &link, |i| {
                derive_seed(run_seed, &[stream::VALIDATION_LINK, i as u64])
            })?
        };
        let entry = EpochLog {
            epoch,
            mean_loss: weighted / sentences as f64,
            val_loss,
        };
        on_epoch(&entry);
        log.push(entry);
        let score = if val_loss.is_nan() { f64::NEG_INFINITY } else { val_loss };
        if best.as_ref().is_none_or(|(b, _, _)| score <= *b) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            vocab_fingerprint: fingerprint,
        },
        log,
        best_epoch,
    })
}

/// Sentence-weighted teacher-forced loss; sentence `i` (in batch order)
/// uses block seed `block_seed(i)`.
pub(super) fn mean_loss(
    model: &Transceiver,
    batches: &[TokenBatch],
    link: &Link,
    block_seed: impl Fn(usize) -> u64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for batch in batches {
        let seeds: Vec<u64> = (n..n + batch.rows()).map(&block_seed).collect();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let out = forward(&mut tape, &bound, batch, link, &seeds)?;
        total += tape.value(out.loss).item()? * batch.rows() as f64;
        n += batch.rows();
    }
    Ok(total / n as f64)
}

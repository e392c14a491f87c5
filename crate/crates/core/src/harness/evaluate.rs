use autodiff::Tape;

use super::{forward, ExperimentConfig, Link, SystemVariant};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::metrics::{BleuConfig, BleuStats};
use crate::model::greedy_decode;
use crate::results::RunRow;
use crate::seed::{derive_seed, stream};
use crate::text::{content_ids, sequential_batches, Vocabulary};

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalCell {
    pub variant: SystemVariant,
    pub snr_db: f64,
    pub epsilon: f64,
    pub seed: u64,
}

/// BLEU-1, BLEU-2 and teacher-forced loss of greedy decoding over `test`.
///
/// Sentence `i` sees the same channel, estimate and noise draws for every
/// variant, SNR and error level that share `cell.seed`.
pub fn evaluate(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    test: &[Vec<usize>],
    cell: EvalCell,
    config: &ExperimentConfig,
) -> Result<RunRow> {
    let link = Link::new(cell.variant, cell.snr_db, cell.epsilon, config.ris_elements)?;
    evaluate_with_link(checkpoint, vocab, test, cell, &link, config)
}

pub fn evaluate_with_link(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    test: &[Vec<usize>],
    cell: EvalCell,
    link: &Link,
    config: &ExperimentConfig,
) -> Result<RunRow> {
    if checkpoint.vocab_fingerprint != vocab.fingerprint() {
        return Err(Error::Config("checkpoint was trained on a different vocabulary".into()));
    }
    let model = &checkpoint.model;
    let max_len = model.shape().max_len;
    if test.is_empty() {
        return Err(Error::Ingest("empty test set".into()));
    }
    if test.iter().any(|s| s.len() != max_len) {
        return Err(Error::Contract(format!("test sentences must have length {max_len}")));
    }
    let batches = sequential_batches(test, config.eval_batch_size)?;
    let mut b1 = BleuStats::new(1);
    let mut b2 = BleuStats::new(2);
    let mut loss_sum = 0.0;
    let mut n = 0usize;
    for batch in &batches {
        let seeds: Vec<u64> = (n..n + batch.rows())
            .map(|i| derive_seed(config.master_seed, &[stream::EVAL_LINK, cell.seed, i as u64]))
            .collect();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let out = forward(&mut tape, &bound, batch, link, &seeds)?;
        let loss = tape.value(out.loss).item()?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("evaluation loss {loss}")));
        }
        loss_sum += loss * batch.rows() as f64;
        let decoded = greedy_decode(model, tape.value(out.v_hat), max_len)?;
        for r in 0..batch.rows() {
            let reference = content_ids(batch.row(r));
            let candidate = content_ids(decoded.row(r));
            b1.add(&reference, &candidate);
            b2.add(&reference, &candidate);
        }
        n += batch.rows();
    }
    Ok(RunRow {
        variant: cell.variant,
        snr_db: cell.snr_db,
        epsilon: cell.epsilon,
        seed: cell.seed,
        bleu1: b1.score(&BleuConfig::individual(1)),
        bleu2: b2.score(&BleuConfig::individual(2)),
        mean_loss: loss_sum / n as f64,
        n_sentences: n,
    })
}

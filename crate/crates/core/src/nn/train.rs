use alloc::vec::Vec;

use rand::Rng;

use crate::data::{batches, BatchRef, Targets};
use crate::error::{input_err, Result};
use crate::matrix::Matrix;

use super::{adam_step, backward, forward, AdamState, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Running averages over the mini-batches of one epoch, measured before each
/// update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn count_correct(output: &Matrix, targets: &Targets) -> Option<usize> {
    match targets {
        Targets::Labels { labels, .. } => {
            Some(labels.iter().enumerate().filter(|&(r, &y)| argmax(output.row(r)) == y).count())
        }
        Targets::Dense(_) => None,
    }
}

/// One shuffled pass of mini-batch Adam over `data`.
pub fn train_epoch<R: Rng + ?Sized>(
    net: &mut Network,
    data: BatchRef<'_>,
    batch_size: usize,
    lr: f64,
    rng: &mut R,
    state: &mut AdamState,
) -> Result<EpochMetrics> {
    if data.is_empty() {
        return Err(input_err!("cannot train on an empty dataset"));
    }
    let loss_kind = net.head().loss_kind();
    let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
    let mut classification = false;
    for batch in batches(data, batch_size, rng)? {
        let trace = forward(net, &batch.x)?;
        let grads = backward(net, &trace, &batch.targets, loss_kind)?;
        let rows = batch.x.rows();
        loss_sum += grads.loss * rows as f64;
        if let Some(c) = count_correct(trace.output(), &batch.targets) {
            correct += c;
            classification = true;
        }
        seen += rows;
        adam_step(net, &grads, state, lr)?;
    }
    Ok(EpochMetrics { loss: loss_sum / seen as f64, accuracy: classification.then(|| correct as f64 / seen as f64) })
}

/// Mini-batch Adam for a fixed number of epochs. The loss follows the
/// network's output head.
pub fn train<R: Rng + ?Sized>(
    net: &mut Network,
    data: BatchRef<'_>,
    cfg: TrainConfig,
    rng: &mut R,
    state: &mut AdamState,
) -> Result<Vec<EpochMetrics>> {
    if data.is_empty() {
        return Err(input_err!("cannot train on an empty dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(input_err!("batch size must be at least 1"));
    }
    (0..cfg.epochs).map(|_| train_epoch(net, data, cfg.batch_size, cfg.lr, rng, state)).collect()
}

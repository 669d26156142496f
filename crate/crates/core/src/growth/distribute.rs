//! Distributors: split a stage's neuron budget across hidden layers.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::BatchRef;
use crate::error::{input_err, Result};
use crate::nn::{LossKind, Network};

use super::probe::{gate_gradients, sample_probes, ProbeSet, ProbeStats};
use super::ExpansionPlan;

/// Splits `total` proportionally to `weights` with integer largest-remainder
/// rounding; ties go to the lower index. All-zero weights split uniformly.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    if weights.is_empty() {
        return Vec::new();
    }
    let uniform;
    let weights = if weights.iter().all(|&w| w == 0) {
        uniform = vec![1; weights.len()];
        &uniform[..]
    } else {
        weights
    };
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    let t = total as u128;
    let mut counts: Vec<usize> = weights.iter().map(|&w| (t * w as u128 / sum) as usize).collect();
    let mut rem: Vec<(u128, usize)> = weights.iter().enumerate().map(|(i, &w)| (t * w as u128 % sum, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = total - counts.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(left) {
        counts[i] += 1;
    }
    counts
}

/// Probe votes per hidden layer with the resulting plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SvodOutcome {
    pub plan: ExpansionPlan,
    pub stats: Vec<ProbeStats>,
}

impl SvodOutcome {
    pub fn votes(&self) -> Vec<usize> {
        self.stats.iter().map(ProbeStats::votes).collect()
    }
}

/// Allocation from probe votes: every hidden layer gets `probes_per_layer`
/// virtual probes, each probe with a negative gating gradient votes for its
/// layer, and `total_m` is split in proportion to the votes.
pub fn svod_allocate<R: Rng + ?Sized>(
    net: &Network,
    total_m: usize,
    probes_per_layer: usize,
    eval: BatchRef<'_>,
    loss_kind: LossKind,
    stage: u32,
    rng: &mut R,
) -> Result<SvodOutcome> {
    let k = net.n_hidden();
    if k == 0 {
        return Err(input_err!("network has no hidden layer"));
    }
    if total_m == 0 {
        return Err(input_err!("neuron budget must be at least 1"));
    }
    let sets: Vec<ProbeSet> = (0..k).map(|l| sample_probes(net, l, probes_per_layer, rng)).collect::<Result<_>>()?;
    let pairs: Vec<(usize, &ProbeSet)> = sets.iter().enumerate().collect();
    let stats = gate_gradients(net, &pairs, eval, loss_kind)?;
    let votes: Vec<usize> = stats.iter().map(ProbeStats::votes).collect();
    let per_layer_counts = if k == 1 { vec![total_m] } else { largest_remainder(total_m, &votes) };
    Ok(SvodOutcome { plan: ExpansionPlan { stage, per_layer_counts }, stats })
}

/// Each neuron goes to an independently drawn uniform hidden layer.
pub fn ras_allocate<R: Rng + ?Sized>(
    total_m: usize,
    n_hidden: usize,
    stage: u32,
    rng: &mut R,
) -> Result<ExpansionPlan> {
    if n_hidden == 0 {
        return Err(input_err!("network has no hidden layer"));
    }
    let mut per_layer_counts = vec![0; n_hidden];
    for _ in 0..total_m {
        per_layer_counts[rng.random_range(0..n_hidden)] += 1;
    }
    Ok(ExpansionPlan { stage, per_layer_counts })
}

/// The whole budget to the only hidden layer.
pub fn single_layer_allocate(total_m: usize, n_hidden: usize, stage: u32) -> Result<ExpansionPlan> {
    if n_hidden != 1 {
        return Err(input_err!("single-layer allocation needs exactly one hidden layer, got {n_hidden}"));
    }
    Ok(ExpansionPlan { stage, per_layer_counts: vec![total_m] })
}

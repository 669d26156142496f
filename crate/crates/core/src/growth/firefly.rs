//! Candidate-pool extender.
//!
//! A simplified stand-in for splitting-based selection: a pool of candidate
//! neurons is inserted without changing the function, only the candidates are
//! trained for a few epochs, and the candidates with the largest gating
//! gradient magnitude are kept.

use alloc::vec::Vec;

use rand::Rng;

use crate::data::{batches, BatchRef};
use crate::error::{input_err, Result};
use crate::matrix::Matrix;
use crate::nn::{backward, forward, LossKind, Network, SliceAdam};

use super::insert_function_preserving;
use super::probe::{gate_gradients, ProbeSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FireflyConfig {
    pub pool_factor: usize,
    pub candidate_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for FireflyConfig {
    fn default() -> Self {
        Self { pool_factor: 5, candidate_epochs: 1, batch_size: 128, lr: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct FireflyOutcome {
    pub net: Network,
    /// Gating gradient of every pool candidate after training.
    pub scores: Vec<f64>,
    /// Pool indices of the kept candidates, ascending.
    pub selected: Vec<usize>,
}

/// Indices of the `m` largest `|score|`, ties to the lower index, returned in
/// ascending order.
pub fn top_by_magnitude(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

struct Candidates {
    layer: usize,
    n_old: usize,
    pool: usize,
}

impl Candidates {
    fn gather(&self, net: &Network, out: &mut Vec<f64>) {
        out.clear();
        let host = &net.layers()[self.layer];
        for j in self.n_old..self.n_old + self.pool {
            out.extend_from_slice(host.weights.row(j));
        }
        out.extend_from_slice(&host.biases[self.n_old..]);
        let next = &net.layers()[self.layer + 1].weights;
        for r in 0..next.rows() {
            out.extend_from_slice(&next.row(r)[self.n_old..]);
        }
    }

    fn gather_grads(&self, gw: &Matrix, gb: &[f64], gnext: &Matrix, out: &mut Vec<f64>) {
        out.clear();
        for j in self.n_old..self.n_old + self.pool {
            out.extend_from_slice(gw.row(j));
        }
        out.extend_from_slice(&gb[self.n_old..]);
        for r in 0..gnext.rows() {
            out.extend_from_slice(&gnext.row(r)[self.n_old..]);
        }
    }

    fn scatter(&self, net: &mut Network, params: &[f64]) {
        let mut it = params.iter().copied();
        let layers = net.layers_mut();
        let host = &mut layers[self.layer];
        for j in self.n_old..self.n_old + self.pool {
            host.weights.row_mut(j).iter_mut().for_each(|w| *w = it.next().unwrap_or(0.0));
        }
        host.biases[self.n_old..].iter_mut().for_each(|b| *b = it.next().unwrap_or(0.0));
        let next = &mut layers[self.layer + 1].weights;
        for r in 0..next.rows() {
            next.row_mut(r)[self.n_old..].iter_mut().for_each(|w| *w = it.next().unwrap_or(0.0));
        }
    }

    fn probe_set(&self, net: &Network) -> ProbeSet {
        let host = &net.layers()[self.layer];
        let cols: Vec<usize> = (self.n_old..self.n_old + self.pool).collect();
        ProbeSet {
            incoming: host.weights.select_rows(&cols),
            biases: host.biases[self.n_old..].to_vec(),
            outgoing: net.layers()[self.layer + 1].weights.select_cols(&cols),
        }
    }
}

/// Candidate-pool insertion of `m` neurons with the full selection record.
#[allow(clippy::too_many_arguments)]
pub fn firefly_lite_select<R: Rng + ?Sized>(
    net: &Network,
    layer: usize,
    m: usize,
    cfg: FireflyConfig,
    train: BatchRef<'_>,
    loss_kind: LossKind,
    stage: u32,
    rng: &mut R,
) -> Result<FireflyOutcome> {
    net.check_hidden(layer)?;
    if m == 0 {
        return Err(input_err!("nothing to insert"));
    }
    if cfg.pool_factor == 0 {
        return Err(input_err!("candidate pool of {} is smaller than m = {m}", 0));
    }
    if train.is_empty() {
        return Err(input_err!("candidate training data is empty"));
    }
    if cfg.batch_size == 0 || cfg.lr.is_nan() || cfg.lr <= 0.0 {
        return Err(input_err!("candidate training needs a positive batch size and learning rate"));
    }
    let pool = cfg.pool_factor * m;
    let c = Candidates { layer, n_old: net.layers()[layer].n_out(), pool };
    let mut work = insert_function_preserving(net, layer, pool, stage, rng)?;

    let mut params = Vec::new();
    let mut grads = Vec::new();
    c.gather(&work, &mut params);
    let mut adam = SliceAdam::new(params.len());
    for _ in 0..cfg.candidate_epochs {
        for batch in batches(train, cfg.batch_size, rng)? {
            let trace = forward(&work, &batch.x)?;
            let g = backward(&work, &trace, &batch.targets, loss_kind)?;
            c.gather_grads(&g.layers[layer].weights, &g.layers[layer].biases, &g.layers[layer + 1].weights, &mut grads);
            if grads.iter().any(|v| !v.is_finite()) {
                return Err(crate::Error::Numerical("non-finite candidate gradient".into()));
            }
            adam.step(&mut params, &grads, cfg.lr);
            c.scatter(&mut work, &params);
        }
    }

    let probes = c.probe_set(&work);
    let scores = gate_gradients(&work, &[(layer, &probes)], train, loss_kind)?.remove(0).gradients;
    let selected = top_by_magnitude(&scores, m);
    let keep: Vec<usize> = (0..c.n_old).chain(selected.iter().map(|&j| c.n_old + j)).collect();
    work.retain_neurons(layer, &keep)?;
    Ok(FireflyOutcome { net: work, scores, selected })
}

/// Candidate-pool insertion of `m` neurons; `m = 0` returns the network as is.
#[allow(clippy::too_many_arguments)]
pub fn firefly_lite_extend<R: Rng + ?Sized>(
    net: &Network,
    layer: usize,
    m: usize,
    cfg: FireflyConfig,
    train: BatchRef<'_>,
    loss_kind: LossKind,
    stage: u32,
    rng: &mut R,
) -> Result<Network> {
    net.check_hidden(layer)?;
    if m == 0 {
        return Ok(net.clone());
    }
    firefly_lite_select(net, layer, m, cfg, train, loss_kind, stage, rng).map(|o| o.net)
}

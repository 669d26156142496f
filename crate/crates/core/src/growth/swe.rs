//! Shared-weights extension.
//!
//! New neurons are attached to a hidden layer with zero outgoing weights, so
//! the network function is unchanged. Every (new, old) neuron pair then gets
//! a coupling `(w_c, b_c)`, initially zero. While couplings exist the layer
//! runs on effective parameters:
//!
//! ```text
//! w_eff_new(j) = w_new(j) + sum_i w_c(j, i)      b_eff_new(j) = b_new(j) + sum_i b_c(j, i)
//! w_eff(i)     = w(i)     - sum_j w_c(j, i)      b_eff(i)     = b(i)     - sum_j b_c(j, i)
//! ```
//!
//! One forward/backward pass over the adjustment data yields a single plain
//! gradient step on the couplings and on the next layer. The couplings are
//! then folded into the base weights and dropped.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::BatchRef;
use crate::error::{dim_err, input_err, Result};
use crate::matrix::Matrix;
use crate::nn::{accumulate_gradient, DenseLayer, LayerGrad, LossKind, Network};

use super::insert_function_preserving;

/// Rows per forward/backward chunk during the adjustment pass.
pub const ADJUST_CHUNK: usize = 1024;

/// Coupling parameters between `n_new` inserted neurons and the `n_old`
/// neurons that were already in the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    /// One `n_old x n_in` matrix per new neuron; row `i` of matrix `j` is
    /// `w_c(j, i)`.
    pub weights: Vec<Matrix>,
    /// `n_new x n_old`; entry `(j, i)` is `b_c(j, i)`.
    pub biases: Matrix,
}

impl CouplingSet {
    pub fn zeros(n_new: usize, n_old: usize, n_in: usize) -> Self {
        Self { weights: (0..n_new).map(|_| Matrix::zeros(n_old, n_in)).collect(), biases: Matrix::zeros(n_new, n_old) }
    }

    pub fn n_new(&self) -> usize {
        self.biases.rows()
    }

    pub fn n_old(&self) -> usize {
        self.biases.cols()
    }

    fn check(&self, host: &DenseLayer) -> Result<()> {
        let (n_new, n_old) = self.biases.shape();
        if host.n_out() != n_old + n_new {
            return Err(dim_err!("couplings for {n_old}+{n_new} neurons on a layer of width {}", host.n_out()));
        }
        if self.weights.len() != n_new || self.weights.iter().any(|w| w.shape() != (n_old, host.n_in())) {
            return Err(dim_err!("coupling weights do not match the host fan-in {}", host.n_in()));
        }
        Ok(())
    }

    /// Effective layer built from `host`, whose first `n_old` rows are the old
    /// neurons and remaining rows the new ones.
    pub fn effective(&self, host: &DenseLayer) -> Result<DenseLayer> {
        self.check(host)?;
        let n_old = self.n_old();
        let n_in = host.n_in();
        let mut out = host.clone();
        for i in 0..n_old {
            let mut s = vec![0.0; n_in];
            let mut sb = 0.0;
            for (j, wc) in self.weights.iter().enumerate() {
                s.iter_mut().zip(wc.row(i)).for_each(|(a, &c)| *a += c);
                sb += self.biases.get(j, i);
            }
            out.weights.row_mut(i).iter_mut().zip(&s).for_each(|(w, &c)| *w -= c);
            out.biases[i] -= sb;
        }
        for (j, wc) in self.weights.iter().enumerate() {
            let mut s = vec![0.0; n_in];
            let mut sb = 0.0;
            for i in 0..n_old {
                s.iter_mut().zip(wc.row(i)).for_each(|(a, &c)| *a += c);
                sb += self.biases.get(j, i);
            }
            out.weights.row_mut(n_old + j).iter_mut().zip(&s).for_each(|(w, &c)| *w += c);
            out.biases[n_old + j] += sb;
        }
        Ok(out)
    }

    /// Loss gradient with respect to the couplings, given the gradient with
    /// respect to the effective layer: `dL/dw_c(j, i) = G_new(j) - G(i)`.
    pub fn gradient(&self, effective_grad: &LayerGrad) -> Result<CouplingSet> {
        let (n_new, n_old) = self.biases.shape();
        let g = &effective_grad.weights;
        if g.rows() != n_old + n_new || self.weights.iter().any(|w| w.cols() != g.cols()) {
            return Err(dim_err!("effective gradient {:?} does not fit the couplings", g.shape()));
        }
        let weights =
            (0..n_new).map(|j| Matrix::from_fn(n_old, g.cols(), |i, k| g.get(n_old + j, k) - g.get(i, k))).collect();
        let gb = &effective_grad.biases;
        let biases = Matrix::from_fn(n_new, n_old, |j, i| gb[n_old + j] - gb[i]);
        Ok(CouplingSet { weights, biases })
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &CouplingSet) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(dim_err!("coupling sets of different sizes"));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.axpy(alpha, b)?;
        }
        self.biases.axpy(alpha, &other.biases)
    }
}

/// The state of a shared-weights insertion between insertion and merge.
#[derive(Debug, Clone)]
pub struct SweAdjustment {
    /// Network after insertion, with the base (non-effective) parameters.
    pub base: Network,
    pub layer: usize,
    pub couplings: CouplingSet,
}

impl SweAdjustment {
    /// Inserts `m` neurons into `layer` (Kaiming incoming weights, zero bias,
    /// zero outgoing weights) and attaches all-zero couplings.
    pub fn begin<R: Rng + ?Sized>(net: &Network, layer: usize, m: usize, stage: u32, rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(input_err!("nothing to insert"));
        }
        let n_old = net.layers().get(layer).map_or(0, DenseLayer::n_out);
        let base = insert_function_preserving(net, layer, m, stage, rng)?;
        let n_in = base.layers()[layer].n_in();
        Ok(Self { base, layer, couplings: CouplingSet::zeros(m, n_old, n_in) })
    }

    /// The network as it computes during adjustment.
    pub fn effective_network(&self) -> Result<Network> {
        let mut net = self.base.clone();
        let eff = self.couplings.effective(&self.base.layers()[self.layer])?;
        net.layers_mut()[self.layer] = eff;
        Ok(net)
    }

    /// One forward/backward pass over `data` on the effective network, then
    /// a plain gradient step of size `lr` on the couplings and on the next
    /// layer's weights and biases.
    pub fn adjust(&mut self, data: BatchRef<'_>, loss_kind: LossKind, lr: f64) -> Result<()> {
        if data.is_empty() {
            return Err(input_err!("adjustment batch is empty"));
        }
        let eff = self.effective_network()?;
        let grads = accumulate_gradient(&eff, data, loss_kind, ADJUST_CHUNK)?;
        let gc = self.couplings.gradient(&grads.layers[self.layer])?;
        self.couplings.axpy(-lr, &gc)?;
        let next = &mut self.base.layers_mut()[self.layer + 1];
        let gn = &grads.layers[self.layer + 1];
        next.weights.axpy(-lr, &gn.weights)?;
        next.biases.iter_mut().zip(&gn.biases).for_each(|(b, g)| *b -= lr * g);
        Ok(())
    }

    /// Folds the couplings into the base weights.
    pub fn merge(self) -> Result<Network> {
        self.effective_network()
    }
}

/// Shared-weights insertion of `m` neurons into hidden layer `layer`, with a
/// single adjustment pass over `adjust`. `m = 0` returns the network as is.
#[allow(clippy::too_many_arguments)]
pub fn swe_extend<R: Rng + ?Sized>(
    net: &Network,
    layer: usize,
    m: usize,
    adjust: BatchRef<'_>,
    loss_kind: LossKind,
    lr: f64,
    stage: u32,
    rng: &mut R,
) -> Result<Network> {
    net.check_hidden(layer)?;
    if m == 0 {
        return Ok(net.clone());
    }
    if adjust.is_empty() {
        return Err(input_err!("adjustment batch is empty"));
    }
    let mut phase = SweAdjustment::begin(net, layer, m, stage, rng)?;
    phase.adjust(adjust, loss_kind, lr)?;
    phase.merge()
}

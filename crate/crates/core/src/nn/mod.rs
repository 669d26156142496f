//! Dense ReLU networks in double precision.
//!
//! A [`Network`] is a stack of [`DenseLayer`]s. Every layer but the last is a
//! hidden ReLU layer; the last layer is linear and its preactivation is the
//! network output (regression values or softmax logits, see [`OutputHead`]).
//! Weight matrices are stored `n_out x n_in`, so a layer computes
//! `u = h_prev @ W^T + b` on a batch laid out one sample per row.

mod adam;
mod init;
mod loss;
mod train;

pub(crate) use adam::SliceAdam;
pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use init::{kaiming_init, kaiming_init_fan_in};
pub use loss::{loss_mse, loss_softmax_ce, output_loss_and_delta, LossKind};
pub(crate) use train::count_correct;
pub use train::{train, train_epoch, EpochMetrics, TrainConfig};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BatchRef, Targets};
use crate::error::{dim_err, input_err, Error, Result};
use crate::matrix::{gemm, Matrix, Trans};

/// Birth record of a neuron. Stage 0 means "present in the initial network".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NeuronTag {
    pub birth_stage: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub tags: Vec<NeuronTag>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, biases: Vec<f64>, tags: Vec<NeuronTag>) -> Result<Self> {
        if biases.len() != weights.rows() || tags.len() != weights.rows() {
            return Err(dim_err!(
                "layer with {} rows has {} biases and {} tags",
                weights.rows(),
                biases.len(),
                tags.len()
            ));
        }
        Ok(Self { weights, biases, tags })
    }

    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Self { weights: Matrix::zeros(n_out, n_in), biases: vec![0.0; n_out], tags: vec![NeuronTag::default(); n_out] }
    }

    #[inline]
    pub fn n_out(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn n_in(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputHead {
    /// Raw linear outputs, paired with MSE.
    Identity,
    /// Logits fed to softmax cross-entropy.
    SoftmaxLogits,
}

impl OutputHead {
    pub fn loss_kind(self) -> LossKind {
        match self {
            OutputHead::Identity => LossKind::Mse,
            OutputHead::SoftmaxLogits => LossKind::SoftmaxCrossEntropy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
    head: OutputHead,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>, head: OutputHead) -> Result<Self> {
        let net = Self { layers, head };
        net.validate()?;
        Ok(net)
    }

    /// Kaiming-initialized weights, zero biases, every neuron tagged stage 0.
    pub fn mlp<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        head: OutputHead,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.is_empty() {
            return Err(input_err!("a network needs at least one hidden layer"));
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &width in hidden.iter().chain(core::iter::once(&output_dim)) {
            let weights = kaiming_init(width, fan_in, rng)?;
            layers.push(DenseLayer { weights, biases: vec![0.0; width], tags: vec![NeuronTag::default(); width] });
            fan_in = width;
        }
        Self::new(layers, head)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(input_err!("a network needs at least one hidden layer"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.biases.len() != layer.n_out() || layer.tags.len() != layer.n_out() {
                return Err(dim_err!("layer {i}: biases/tags do not match {} rows", layer.n_out()));
            }
            if layer.n_out() == 0 || layer.n_in() == 0 {
                return Err(dim_err!("layer {i} has an empty dimension"));
            }
            if i > 0 && layer.n_in() != self.layers[i - 1].n_out() {
                return Err(dim_err!(
                    "layer {i} expects {} inputs but layer {} has {} outputs",
                    layer.n_in(),
                    i - 1,
                    self.layers[i - 1].n_out()
                ));
            }
        }
        Ok(())
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access to the raw layers. Callers that reshape a layer must
    /// keep neighbouring dimensions consistent; [`Network::validate`] checks.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn n_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.n_hidden()].iter().map(DenseLayer::n_out).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.biases.iter().all(|b| b.is_finite()))
    }

    pub(crate) fn check_hidden(&self, layer: usize) -> Result<()> {
        if layer >= self.n_hidden() {
            return Err(input_err!(
                "layer {layer} is not a hidden layer (network has {} hidden layers)",
                self.n_hidden()
            ));
        }
        Ok(())
    }

    /// Appends neurons to hidden layer `layer`: `incoming` rows (with
    /// `biases`) go into the layer, `outgoing` columns into the next layer.
    pub fn insert_neurons(
        &mut self,
        layer: usize,
        incoming: &Matrix,
        biases: &[f64],
        outgoing: &Matrix,
        stage: u32,
    ) -> Result<()> {
        self.check_hidden(layer)?;
        let m = incoming.rows();
        if biases.len() != m || outgoing.cols() != m {
            return Err(dim_err!("{m} incoming rows, {} biases, {} outgoing columns", biases.len(), outgoing.cols()));
        }
        if incoming.cols() != self.layers[layer].n_in() {
            return Err(dim_err!(
                "incoming rows have {} entries, fan-in is {}",
                incoming.cols(),
                self.layers[layer].n_in()
            ));
        }
        if outgoing.rows() != self.layers[layer + 1].n_out() {
            return Err(dim_err!(
                "outgoing columns have {} entries, next layer has {}",
                outgoing.rows(),
                self.layers[layer + 1].n_out()
            ));
        }
        let host = &mut self.layers[layer];
        host.weights.append_rows(incoming)?;
        host.biases.extend_from_slice(biases);
        host.tags.extend(core::iter::repeat_n(NeuronTag { birth_stage: stage }, m));
        self.layers[layer + 1].weights.append_cols(outgoing)?;
        Ok(())
    }

    /// Keeps only the neurons listed in `keep` (in that order) in hidden layer
    /// `layer`, dropping the matching columns of the next layer.
    pub fn retain_neurons(&mut self, layer: usize, keep: &[usize]) -> Result<()> {
        self.check_hidden(layer)?;
        let n = self.layers[layer].n_out();
        if keep.is_empty() || keep.iter().any(|&i| i >= n) {
            return Err(input_err!("invalid neuron selection for a layer of width {n}"));
        }
        let host = &mut self.layers[layer];
        host.weights = host.weights.select_rows(keep);
        host.biases = keep.iter().map(|&i| host.biases[i]).collect();
        host.tags = keep.iter().map(|&i| host.tags[i]).collect();
        let next = &mut self.layers[layer + 1];
        next.weights = next.weights.select_cols(keep);
        Ok(())
    }
}

#[inline]
pub fn relu(u: f64) -> f64 {
    if u > 0.0 {
        u
    } else {
        0.0
    }
}

/// ReLU derivative with the subgradient at zero taken as 0.
#[inline]
pub fn relu_grad(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Everything a backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Matrix,
    /// Preactivation of every layer, `batch x n_l`.
    pub pre: Vec<Matrix>,
    /// ReLU outputs of the hidden layers only.
    pub hidden: Vec<Matrix>,
}

impl ForwardTrace {
    /// Output of the final (linear) layer.
    pub fn output(&self) -> &Matrix {
        self.pre.last().expect("trace has at least one layer")
    }

    /// Input to layer `l`: the batch for `l = 0`, else the previous hidden
    /// activations.
    pub fn layer_input(&self, l: usize) -> &Matrix {
        if l == 0 {
            &self.input
        } else {
            &self.hidden[l - 1]
        }
    }
}

fn affine(x: &Matrix, layer: &DenseLayer) -> Result<Matrix> {
    if x.cols() != layer.n_in() {
        return Err(dim_err!("input has {} columns, layer expects {}", x.cols(), layer.n_in()));
    }
    let mut u = Matrix::zeros(x.rows(), layer.n_out());
    for r in 0..u.rows() {
        u.row_mut(r).copy_from_slice(&layer.biases);
    }
    gemm(1.0, x, Trans::No, &layer.weights, Trans::Yes, 1.0, &mut u)?;
    Ok(u)
}

pub fn forward(net: &Network, x: &Matrix) -> Result<ForwardTrace> {
    if x.cols() != net.input_dim() {
        return Err(dim_err!("batch has {} features, network expects {}", x.cols(), net.input_dim()));
    }
    let n = net.layers.len();
    let mut pre = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n - 1);
    for (l, layer) in net.layers.iter().enumerate() {
        let input = if l == 0 { x } else { &hidden[l - 1] };
        let u = affine(input, layer)?;
        if l + 1 < n {
            let mut h = u.clone();
            h.as_mut_slice().iter_mut().for_each(|v| *v = relu(*v));
            hidden.push(h);
        }
        pre.push(u);
    }
    Ok(ForwardTrace { input: x.clone(), pre, hidden })
}

/// Network output only, without keeping the trace.
pub fn predict(net: &Network, x: &Matrix) -> Result<Matrix> {
    if x.cols() != net.input_dim() {
        return Err(dim_err!("batch has {} features, network expects {}", x.cols(), net.input_dim()));
    }
    let n = net.layers.len();
    let mut h = affine(x, &net.layers[0])?;
    for layer in &net.layers[1..n] {
        h.as_mut_slice().iter_mut().for_each(|v| *v = relu(*v));
        h = affine(&h, layer)?;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self { weights: Matrix::zeros(layer.n_out(), layer.n_in()), biases: vec![0.0; layer.n_out()] }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.biases.iter().all(|b| b.is_finite())
    }
}

/// Gradients of the mean batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
    /// `dL/du_l` for every layer, `batch x n_l`. Empty when the set was
    /// accumulated over several chunks.
    pub deltas: Vec<Matrix>,
    pub loss: f64,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self { layers: net.layers.iter().map(LayerGrad::zeros_like).collect(), deltas: Vec::new(), loss: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.layers.iter().all(LayerGrad::is_finite)
    }
}

pub fn backward(net: &Network, trace: &ForwardTrace, targets: &Targets, loss_kind: LossKind) -> Result<GradientSet> {
    let n = net.layers.len();
    if trace.pre.len() != n || trace.hidden.len() + 1 != n {
        return Err(Error::Consistency(alloc::format!("trace has {} layers, network has {n}", trace.pre.len())));
    }
    for (l, (u, layer)) in trace.pre.iter().zip(&net.layers).enumerate() {
        if u.cols() != layer.n_out() || u.rows() != trace.input.rows() {
            return Err(Error::Consistency(alloc::format!(
                "trace layer {l} has shape {:?}, network layer has {} outputs",
                u.shape(),
                layer.n_out()
            )));
        }
    }
    let (loss, mut delta) = output_loss_and_delta(trace.output(), targets, loss_kind)?;
    let mut layers = Vec::with_capacity(n);
    let mut deltas = Vec::with_capacity(n);
    for l in (0..n).rev() {
        let layer = &net.layers[l];
        let input = trace.layer_input(l);
        let mut dw = Matrix::zeros(layer.n_out(), layer.n_in());
        gemm(1.0, &delta, Trans::Yes, input, Trans::No, 0.0, &mut dw)?;
        let db = delta.col_sums();
        layers.push(LayerGrad { weights: dw, biases: db });
        let next_delta = if l > 0 {
            let mut back = Matrix::zeros(delta.rows(), layer.n_in());
            gemm(1.0, &delta, Trans::No, &layer.weights, Trans::No, 0.0, &mut back)?;
            for (b, u) in back.as_mut_slice().iter_mut().zip(trace.pre[l - 1].as_slice()) {
                *b *= relu_grad(*u);
            }
            Some(back)
        } else {
            None
        };
        deltas.push(delta);
        match next_delta {
            Some(d) => delta = d,
            None => break,
        }
    }
    layers.reverse();
    deltas.reverse();
    Ok(GradientSet { layers, deltas, loss })
}

/// Gradient of the mean loss over `data`, evaluated in chunks of at most
/// `chunk` rows and recombined with weights `rows / total`.
pub fn accumulate_gradient(
    net: &Network,
    data: BatchRef<'_>,
    loss_kind: LossKind,
    chunk: usize,
) -> Result<GradientSet> {
    if data.is_empty() {
        return Err(input_err!("cannot take a gradient over an empty batch"));
    }
    let total = data.len();
    if chunk >= total {
        let trace = forward(net, data.x)?;
        return backward(net, &trace, data.targets, loss_kind);
    }
    let mut acc = GradientSet::zeros_like(net);
    let mut start = 0;
    while start < total {
        let end = (start + chunk.max(1)).min(total);
        let part = data.slice(start, end);
        let trace = forward(net, &part.x)?;
        let g = backward(net, &trace, &part.targets, loss_kind)?;
        let w = (end - start) as f64 / total as f64;
        for (a, gl) in acc.layers.iter_mut().zip(&g.layers) {
            a.weights.axpy(w, &gl.weights)?;
            a.biases.iter_mut().zip(&gl.biases).for_each(|(x, y)| *x += w * y);
        }
        acc.loss += w * g.loss;
        start = end;
    }
    Ok(acc)
}

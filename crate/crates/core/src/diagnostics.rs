//! Inactive-neuron audits, evaluation and finite-difference gradient checks.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::BatchRef;
use crate::error::{input_err, Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, backward, forward, output_loss_and_delta, GradientSet, LossKind, Network};

/// Rows per forward pass when streaming over a dataset.
pub const DEFAULT_CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerInactivity {
    pub total_neurons: usize,
    pub inactive_total: usize,
    /// Neurons whose birth stage matches the query stage.
    pub new_total: usize,
    pub inactive_new: usize,
}

impl LayerInactivity {
    pub fn inactive_pct(&self) -> f64 {
        pct(self.inactive_total, self.total_neurons)
    }

    pub fn inactive_new_pct(&self) -> f64 {
        pct(self.inactive_new, self.new_total)
    }
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Per-hidden-layer counts of neurons whose ReLU output is exactly zero on
/// every sample of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InactivityReport {
    /// Stage used to select "new" neurons; `None` treats every neuron as new.
    pub stage: Option<u32>,
    pub layers: Vec<LayerInactivity>,
}

impl InactivityReport {
    pub fn totals(&self) -> LayerInactivity {
        self.layers.iter().fold(
            LayerInactivity { total_neurons: 0, inactive_total: 0, new_total: 0, inactive_new: 0 },
            |a, l| LayerInactivity {
                total_neurons: a.total_neurons + l.total_neurons,
                inactive_total: a.inactive_total + l.inactive_total,
                new_total: a.new_total + l.new_total,
                inactive_new: a.inactive_new + l.inactive_new,
            },
        )
    }
}

/// For every hidden layer, `true` marks a neuron that never fires on `x`.
pub fn inactive_mask(net: &Network, x: &Matrix, chunk: usize) -> Result<Vec<Vec<bool>>> {
    if x.rows() == 0 {
        return Err(input_err!("cannot audit activity on an empty dataset"));
    }
    let chunk = chunk.max(1);
    let mut fired: Vec<Vec<bool>> = net.hidden_widths().iter().map(|&w| vec![false; w]).collect();
    let mut start = 0;
    while start < x.rows() {
        let end = (start + chunk).min(x.rows());
        let idx: Vec<usize> = (start..end).collect();
        let part = x.select_rows(&idx);
        let trace = forward(net, &part)?;
        for (flags, h) in fired.iter_mut().zip(&trace.hidden) {
            for r in 0..h.rows() {
                for (f, &v) in flags.iter_mut().zip(h.row(r)) {
                    *f |= v > 0.0;
                }
            }
        }
        start = end;
    }
    Ok(fired.into_iter().map(|l| l.into_iter().map(|f| !f).collect()).collect())
}

pub fn measure_inactivity(net: &Network, x: &Matrix, stage_filter: Option<u32>) -> Result<InactivityReport> {
    measure_inactivity_chunked(net, x, stage_filter, DEFAULT_CHUNK)
}

pub fn measure_inactivity_chunked(
    net: &Network,
    x: &Matrix,
    stage_filter: Option<u32>,
    chunk: usize,
) -> Result<InactivityReport> {
    let mask = inactive_mask(net, x, chunk)?;
    let layers = mask
        .iter()
        .zip(net.layers())
        .map(|(dead, layer)| {
            let is_new = |i: usize| stage_filter.is_none_or(|s| layer.tags[i].birth_stage == s);
            LayerInactivity {
                total_neurons: dead.len(),
                inactive_total: dead.iter().filter(|&&d| d).count(),
                new_total: (0..dead.len()).filter(|&i| is_new(i)).count(),
                inactive_new: (0..dead.len()).filter(|&i| is_new(i) && dead[i]).count(),
            }
        })
        .collect();
    Ok(InactivityReport { stage: stage_filter, layers })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub loss: f64,
    /// Present only for classification networks.
    pub accuracy: Option<f64>,
    pub sample_count: usize,
}

pub fn evaluate(net: &Network, data: BatchRef<'_>) -> Result<EvalResult> {
    evaluate_chunked(net, data, DEFAULT_CHUNK)
}

/// Mean loss (and argmax accuracy for classification) over all of `data`.
pub fn evaluate_chunked(net: &Network, data: BatchRef<'_>, chunk: usize) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(input_err!("cannot evaluate on an empty dataset"));
    }
    let kind = net.head().loss_kind();
    let n = data.len();
    let chunk = chunk.max(1);
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let part = data.slice(start, end);
        let out = nn::predict(net, &part.x)?;
        let (loss, _) = output_loss_and_delta(&out, &part.targets, kind)?;
        loss_sum += loss * (end - start) as f64;
        correct += nn::count_correct(&out, &part.targets).unwrap_or(0);
        start = end;
    }
    let accuracy = match kind {
        LossKind::SoftmaxCrossEntropy => Some(correct as f64 / n as f64),
        LossKind::Mse => None,
    };
    Ok(EvalResult { loss: loss_sum / n as f64, accuracy, sample_count: n })
}

/// Networks larger than this are refused by [`grad_check`].
pub const GRAD_CHECK_MAX_PARAMS: usize = 100_000;

/// Gradient magnitude below which the comparison is absolute rather than
/// relative: an error of `1e-5` relative to this floor is `1e-8` absolute.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(layer, flat index into weights then biases)` of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

fn param_mut(net: &mut Network, l: usize, i: usize, n_w: usize) -> &mut f64 {
    let layer = &mut net.layers_mut()[l];
    if i < n_w {
        &mut layer.weights.as_mut_slice()[i]
    } else {
        &mut layer.biases[i - n_w]
    }
}

fn batch_loss(net: &Network, data: BatchRef<'_>, kind: LossKind) -> Result<f64> {
    let out = nn::predict(net, data.x)?;
    Ok(output_loss_and_delta(&out, data.targets, kind)?.0)
}

/// Compares backpropagated gradients with central finite differences on
/// every parameter.
pub fn grad_check(net: &Network, data: BatchRef<'_>, loss_kind: LossKind, step: f64) -> Result<GradCheckReport> {
    let trace = forward(net, data.x)?;
    let grads = backward(net, &trace, data.targets, loss_kind)?;
    compare_with_finite_differences(net, data, loss_kind, &grads, step)
}

/// Scores a supplied gradient set against finite differences. The error of an
/// entry is `|analytic - numeric| / max(|numeric|, GRAD_CHECK_FLOOR)`.
pub fn compare_with_finite_differences(
    net: &Network,
    data: BatchRef<'_>,
    loss_kind: LossKind,
    grads: &GradientSet,
    step: f64,
) -> Result<GradCheckReport> {
    let params = net.param_count();
    if params > GRAD_CHECK_MAX_PARAMS {
        return Err(Error::Size(alloc::format!(
            "{params} parameters exceed the gradient-check limit of {GRAD_CHECK_MAX_PARAMS}"
        )));
    }
    if step.is_nan() || step <= 0.0 {
        return Err(input_err!("finite-difference step must be positive"));
    }
    if grads.layers.len() != net.layers().len() {
        return Err(Error::Consistency("gradient set does not match the network".into()));
    }
    let mut probe = net.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), checked: 0 };
    for l in 0..net.layers().len() {
        let n_w = net.layers()[l].weights.as_slice().len();
        let n_b = net.layers()[l].biases.len();
        for i in 0..n_w + n_b {
            let analytic =
                if i < n_w { grads.layers[l].weights.as_slice()[i] } else { grads.layers[l].biases[i - n_w] };
            let original = *param_mut(&mut probe, l, i, n_w);
            *param_mut(&mut probe, l, i, n_w) = original + step;
            let plus = batch_loss(&probe, data, loss_kind)?;
            *param_mut(&mut probe, l, i, n_w) = original - step;
            let minus = batch_loss(&probe, data, loss_kind)?;
            *param_mut(&mut probe, l, i, n_w) = original;
            let numeric = (plus - minus) / (2.0 * step);
            let err = (analytic - numeric).abs() / numeric.abs().max(GRAD_CHECK_FLOOR);
            if err.is_nan() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (l, i);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Targets;
    use crate::nn::{DenseLayer, NeuronTag, OutputHead};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_layer_net(w: f64, b: f64, width: usize) -> Network {
        let l0 =
            DenseLayer::new(Matrix::from_fn(width, 3, |_, _| w), vec![b; width], vec![NeuronTag::default(); width])
                .unwrap();
        let l1 = DenseLayer::zeros(2, width);
        Network::new(vec![l0, l1], OutputHead::Identity).unwrap()
    }

    #[test]
    fn forced_dead_and_alive() {
        let x = Matrix::from_fn(5, 3, |r, c| (r + c) as f64);
        let dead = measure_inactivity(&one_layer_net(0.0, -1.0, 4), &x, None).unwrap();
        assert_eq!(dead.layers[0].inactive_pct(), 100.0);
        let alive = measure_inactivity(&one_layer_net(0.0, 1.0, 4), &x, None).unwrap();
        assert_eq!(alive.layers[0].inactive_pct(), 0.0);
        assert!(measure_inactivity(&alive_net(), &Matrix::zeros(0, 3), None).is_err());
    }

    fn alive_net() -> Network {
        one_layer_net(0.0, 1.0, 2)
    }

    #[test]
    fn stage_filter_counts_only_that_stage() {
        let mut net = one_layer_net(0.0, 1.0, 3);
        net.insert_neurons(0, &Matrix::zeros(2, 3), &[-1.0, 1.0], &Matrix::zeros(2, 2), 4).unwrap();
        let x = Matrix::from_fn(3, 3, |r, c| (r * c) as f64);
        let rep = measure_inactivity(&net, &x, Some(4)).unwrap();
        let l = rep.layers[0];
        assert_eq!((l.total_neurons, l.inactive_total, l.new_total, l.inactive_new), (5, 1, 2, 1));
        assert_eq!(l.inactive_new_pct(), 50.0);
    }

    #[test]
    fn streaming_matches_full_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let mut net = Network::mlp(4, &[6, 5], 2, OutputHead::Identity, &mut rng).unwrap();
            for b in net.layers_mut()[0].biases.iter_mut() {
                *b = rng.random_range(-1.5..0.5);
            }
            let x = Matrix::from_fn(37, 4, |_, _| rng.random_range(-1.0..1.0));
            let rep = measure_inactivity_chunked(&net, &x, None, 5).unwrap();
            // brute force: max activation per neuron over the whole matrix
            let t = forward(&net, &x).unwrap();
            for (l, h) in t.hidden.iter().enumerate() {
                let dead =
                    (0..h.cols()).filter(|&c| (0..h.rows()).map(|r| h.get(r, c)).fold(0.0, f64::max) == 0.0).count();
                assert_eq!(rep.layers[l].inactive_total, dead);
            }
        }
    }

    #[test]
    fn evaluation_is_chunk_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = Network::mlp(4, &[8], 3, OutputHead::SoftmaxLogits, &mut rng).unwrap();
        let x = Matrix::from_fn(300, 4, |_, _| rng.random::<f64>());
        let y = Targets::Labels { labels: (0..300).map(|i| i % 3).collect(), n_classes: 3 };
        let a = evaluate_chunked(&net, BatchRef { x: &x, targets: &y }, 1).unwrap();
        let b = evaluate_chunked(&net, BatchRef { x: &x, targets: &y }, 128).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-10);
        assert_eq!(a.accuracy, b.accuracy);
        assert_eq!(a.sample_count, 300);
    }

    #[test]
    fn perfect_predictor() {
        let l0 =
            DenseLayer::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]), vec![0.0; 2], vec![NeuronTag::default(); 2])
                .unwrap();
        let l1 =
            DenseLayer::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]), vec![0.0; 2], vec![NeuronTag::default(); 2])
                .unwrap();
        let net = Network::new(vec![l0, l1], OutputHead::Identity).unwrap();
        let x = Matrix::from_rows(&[[0.2, 0.4], [1.0, 0.0]]);
        let y = Targets::Dense(x.clone());
        let r = evaluate(&net, BatchRef { x: &x, targets: &y }).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.accuracy, None);

        let cls = Network::new(net.layers().to_vec(), OutputHead::SoftmaxLogits).unwrap();
        let x = Matrix::from_rows(&[[5.0, 0.0], [0.0, 5.0]]);
        let y = Targets::Labels { labels: vec![0, 1], n_classes: 2 };
        assert_eq!(evaluate(&cls, BatchRef { x: &x, targets: &y }).unwrap().accuracy, Some(1.0));
    }

    #[test]
    fn constant_logits_hit_chance() {
        let mut net = Network::mlp(3, &[4], 10, OutputHead::SoftmaxLogits, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        net.layers_mut()[1].weights = Matrix::zeros(10, 4);
        net.layers_mut()[1].biases = vec![0.0; 10];
        net.layers_mut()[1].biases[7] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 20_000;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let direct = labels.iter().filter(|&&l| l == 7).count() as f64 / n as f64;
        let x = Matrix::from_fn(n, 3, |_, _| rng.random::<f64>());
        let y = Targets::Labels { labels, n_classes: 10 };
        let acc = evaluate(&net, BatchRef { x: &x, targets: &y }).unwrap().accuracy.unwrap();
        assert_eq!(acc, direct);
        assert!((acc - 0.1).abs() < 0.01);
    }

    #[test]
    fn grad_check_accepts_backprop_and_catches_faults() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let net = Network::mlp(3, &[5, 4], 2, OutputHead::Identity, &mut rng).unwrap();
        let x = Matrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = Targets::Dense(Matrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0)));
        let b = BatchRef { x: &x, targets: &y };
        let ok = grad_check(&net, b, LossKind::Mse, 1e-6).unwrap();
        assert!(ok.max_rel_error < 1e-5, "{ok:?}");

        let trace = forward(&net, &x).unwrap();
        let mut g = backward(&net, &trace, &y, LossKind::Mse).unwrap();
        let (i, _) =
            g.layers[1].weights.as_slice().iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
        g.layers[1].weights.as_mut_slice()[i] *= 2.0;
        let bad = compare_with_finite_differences(&net, b, LossKind::Mse, &g, 1e-6).unwrap();
        assert!((bad.max_rel_error - 1.0).abs() < 1e-4, "{bad:?}");
        assert_eq!(bad.worst, (1, i));
    }

    #[test]
    fn grad_check_zero_loss_uses_absolute_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let net = Network::mlp(3, &[4], 2, OutputHead::Identity, &mut rng).unwrap();
        let x = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = Targets::Dense(nn::predict(&net, &x).unwrap());
        let r = grad_check(&net, BatchRef { x: &x, targets: &y }, LossKind::Mse, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-5);
    }

    #[test]
    fn grad_check_size_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = Network::mlp(400, &[300], 2, OutputHead::Identity, &mut rng).unwrap();
        let x = Matrix::zeros(1, 400);
        let y = Targets::Dense(Matrix::zeros(1, 2));
        let r = grad_check(&net, BatchRef { x: &x, targets: &y }, LossKind::Mse, 1e-6);
        assert!(matches!(r, Err(Error::Size(_))));
    }
}

//! Virtual probe neurons and their gating gradients.
//!
//! A probe in hidden layer `l` has incoming weights `w`, bias `b` and an
//! outgoing vector `v` into layer `l + 1`. Its output is gated as
//! `phi((1 + z) u)` with `u = w . h_{l-1} + b`. With `delta_{l+1}` the error
//! signal of the unmodified network at the next layer's preactivation,
//!
//! ```text
//! dL/dz |_{z=0} = sum_rows (delta_{l+1,row} . v) * phi'(u_row) * u_row
//! ```
//!
//! Probes are never wired into the network; the network is read only.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::BatchRef;
use crate::error::{dim_err, input_err, Result};
use crate::matrix::{gemm, Matrix, Trans};
use crate::nn::{backward, forward, kaiming_init, kaiming_init_fan_in, relu_grad, LossKind, Network};

use super::swe::ADJUST_CHUNK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub layer_index: usize,
    /// `dL/dz` at `z = 0`, one per probe.
    pub gradients: Vec<f64>,
}

impl ProbeStats {
    /// Probes with a strictly negative gating gradient.
    pub fn votes(&self) -> usize {
        self.gradients.iter().filter(|&&g| g < 0.0).count()
    }
}

/// A batch of candidate neurons for one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    /// `count x n_in`
    pub incoming: Matrix,
    pub biases: Vec<f64>,
    /// `n_next x count`
    pub outgoing: Matrix,
}

impl ProbeSet {
    pub fn len(&self) -> usize {
        self.incoming.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.incoming.rows() == 0
    }
}

/// Kaiming incoming weights over the layer's fan-in, zero biases, Kaiming
/// outgoing vectors with the layer width as fan-in.
pub fn sample_probes<R: Rng + ?Sized>(net: &Network, layer: usize, count: usize, rng: &mut R) -> Result<ProbeSet> {
    net.check_hidden(layer)?;
    if count == 0 {
        return Err(input_err!("at least one probe is required"));
    }
    let host = &net.layers()[layer];
    let incoming = kaiming_init(count, host.n_in(), rng)?;
    let outgoing = kaiming_init_fan_in(net.layers()[layer + 1].n_out(), count, host.n_out(), rng)?;
    Ok(ProbeSet { incoming, biases: vec![0.0; count], outgoing })
}

/// Gating gradients for probe sets in several layers from one pass over
/// `data`. `probes` pairs a hidden layer index with the probes placed there.
pub fn gate_gradients(
    net: &Network,
    probes: &[(usize, &ProbeSet)],
    data: BatchRef<'_>,
    loss_kind: LossKind,
) -> Result<Vec<ProbeStats>> {
    if data.is_empty() {
        return Err(input_err!("probe evaluation batch is empty"));
    }
    for &(l, p) in probes {
        net.check_hidden(l)?;
        let host = &net.layers()[l];
        if p.incoming.cols() != host.n_in()
            || p.biases.len() != p.len()
            || p.outgoing.shape() != (net.layers()[l + 1].n_out(), p.len())
        {
            return Err(dim_err!("probe set does not fit hidden layer {l}"));
        }
    }
    let mut stats: Vec<ProbeStats> =
        probes.iter().map(|&(l, p)| ProbeStats { layer_index: l, gradients: vec![0.0; p.len()] }).collect();
    let total = data.len();
    let mut start = 0;
    while start < total {
        let end = (start + ADJUST_CHUNK).min(total);
        let part = data.slice(start, end);
        let trace = forward(net, &part.x)?;
        let grads = backward(net, &trace, &part.targets, loss_kind)?;
        let weight = (end - start) as f64 / total as f64;
        for (stat, &(l, p)) in stats.iter_mut().zip(probes) {
            let rows = end - start;
            let mut u = Matrix::zeros(rows, p.len());
            for r in 0..rows {
                u.row_mut(r).copy_from_slice(&p.biases);
            }
            gemm(1.0, trace.layer_input(l), Trans::No, &p.incoming, Trans::Yes, 1.0, &mut u)?;
            let mut upstream = Matrix::zeros(rows, p.len());
            gemm(1.0, &grads.deltas[l + 1], Trans::No, &p.outgoing, Trans::No, 0.0, &mut upstream)?;
            for r in 0..rows {
                for (k, g) in stat.gradients.iter_mut().enumerate() {
                    let ur = u.get(r, k);
                    *g += weight * upstream.get(r, k) * relu_grad(ur) * ur;
                }
            }
        }
        start = end;
    }
    Ok(stats)
}

/// Samples `probes_per_layer` probes for hidden layer `layer` and returns their
/// gating gradients on `eval`.
pub fn probe_gradients<R: Rng + ?Sized>(
    net: &Network,
    layer: usize,
    probes_per_layer: usize,
    eval: BatchRef<'_>,
    loss_kind: LossKind,
    rng: &mut R,
) -> Result<ProbeStats> {
    let probes = sample_probes(net, layer, probes_per_layer, rng)?;
    let mut stats = gate_gradients(net, &[(layer, &probes)], eval, loss_kind)?;
    Ok(stats.remove(0))
}

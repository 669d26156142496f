//! Width growth: extenders add neurons to one hidden layer, distributors
//! decide how many neurons each hidden layer receives.

mod baseline;
mod distribute;
mod firefly;
mod probe;
mod swe;

pub use baseline::{frobenius_extend, kaiming_extend, rescale_to_norm};
pub use distribute::{largest_remainder, ras_allocate, single_layer_allocate, svod_allocate, SvodOutcome};
pub use firefly::{firefly_lite_extend, firefly_lite_select, top_by_magnitude, FireflyConfig, FireflyOutcome};
pub use probe::{gate_gradients, probe_gradients, sample_probes, ProbeSet, ProbeStats};
pub use swe::{swe_extend, CouplingSet, SweAdjustment, ADJUST_CHUNK};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::BatchRef;
use crate::error::{input_err, Error, Result};
use crate::matrix::Matrix;
use crate::nn::{kaiming_init, LossKind, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtenderKind {
    Swe,
    /// Plain random (Kaiming) initialization of the new neurons.
    #[serde(alias = "random")]
    Kaiming,
    Frobenius,
    #[serde(alias = "firefly")]
    FireflyLite,
}

impl ExtenderKind {
    pub fn name(self) -> &'static str {
        match self {
            ExtenderKind::Swe => "swe",
            ExtenderKind::Kaiming => "kaiming",
            ExtenderKind::Frobenius => "frobenius",
            ExtenderKind::FireflyLite => "firefly_lite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributorKind {
    Svod,
    Ras,
    SingleLayer,
}

impl DistributorKind {
    pub fn name(self) -> &'static str {
        match self {
            DistributorKind::Svod => "svod",
            DistributorKind::Ras => "ras",
            DistributorKind::SingleLayer => "single_layer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub stage: u32,
    pub per_layer_counts: Vec<usize>,
}

impl ExpansionPlan {
    pub fn zeros(stage: u32, n_hidden: usize) -> Self {
        Self { stage, per_layer_counts: vec![0; n_hidden] }
    }

    pub fn total(&self) -> usize {
        self.per_layer_counts.iter().sum()
    }
}

/// Appends `m` neurons with Kaiming incoming weights, zero biases and zero
/// outgoing weights. The network function does not change.
pub fn insert_function_preserving<R: Rng + ?Sized>(
    net: &Network,
    layer: usize,
    m: usize,
    stage: u32,
    rng: &mut R,
) -> Result<Network> {
    net.check_hidden(layer)?;
    let mut out = net.clone();
    if m == 0 {
        return Ok(out);
    }
    let incoming = kaiming_init(m, net.layers()[layer].n_in(), rng)?;
    let outgoing = Matrix::zeros(net.layers()[layer + 1].n_out(), m);
    out.insert_neurons(layer, &incoming, &vec![0.0; m], &outgoing, stage)?;
    Ok(out)
}

/// Data and settings an extender may need.
#[derive(Debug, Clone, Copy)]
pub struct ExtendContext<'a> {
    /// Adjustment data for shared-weights insertion and training data for
    /// candidate pools.
    pub data: BatchRef<'a>,
    pub loss_kind: LossKind,
    pub lr: f64,
    pub firefly: FireflyConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    /// Forward/backward adjustment passes run by shared-weights insertion.
    pub adjustment_passes: usize,
}

/// Grows a single hidden layer with the chosen extender.
pub fn extend_layer<R: Rng + ?Sized>(
    net: &Network,
    layer: usize,
    m: usize,
    extender: ExtenderKind,
    ctx: &ExtendContext<'_>,
    stage: u32,
    rng: &mut R,
) -> Result<Network> {
    match extender {
        ExtenderKind::Swe => swe_extend(net, layer, m, ctx.data, ctx.loss_kind, ctx.lr, stage, rng),
        ExtenderKind::Kaiming => kaiming_extend(net, layer, m, stage, rng),
        ExtenderKind::Frobenius => frobenius_extend(net, layer, m, stage, rng),
        ExtenderKind::FireflyLite => {
            firefly_lite_extend(net, layer, m, ctx.firefly, ctx.data, ctx.loss_kind, stage, rng)
        }
    }
}

/// Applies `plan` layer by layer from the input side. Every layer sees the
/// network as left by the previous one; layers with a zero count are skipped.
pub fn apply_plan<R: Rng + ?Sized>(
    net: &Network,
    plan: &ExpansionPlan,
    extender: ExtenderKind,
    ctx: &ExtendContext<'_>,
    rng: &mut R,
) -> Result<(Network, ApplyStats)> {
    if plan.per_layer_counts.len() != net.n_hidden() {
        return Err(Error::Consistency(alloc::format!(
            "plan has {} layers, network has {} hidden layers",
            plan.per_layer_counts.len(),
            net.n_hidden()
        )));
    }
    let mut stats = ApplyStats::default();
    let mut cur = net.clone();
    for (layer, &m) in plan.per_layer_counts.iter().enumerate() {
        if m == 0 {
            continue;
        }
        cur = extend_layer(&cur, layer, m, extender, ctx, plan.stage, rng)?;
        if extender == ExtenderKind::Swe {
            stats.adjustment_passes += 1;
        }
    }
    Ok((cur, stats))
}

/// Runs the chosen distributor. `eval` is only read by probe voting.
#[allow(clippy::too_many_arguments)]
pub fn allocate<R: Rng + ?Sized>(
    kind: DistributorKind,
    net: &Network,
    total_m: usize,
    probes_per_layer: usize,
    eval: BatchRef<'_>,
    loss_kind: LossKind,
    stage: u32,
    rng: &mut R,
) -> Result<ExpansionPlan> {
    if total_m == 0 {
        return Err(input_err!("neuron budget must be at least 1"));
    }
    match kind {
        DistributorKind::Svod => {
            svod_allocate(net, total_m, probes_per_layer, eval, loss_kind, stage, rng).map(|o| o.plan)
        }
        DistributorKind::Ras => ras_allocate(total_m, net.n_hidden(), stage, rng),
        DistributorKind::SingleLayer => single_layer_allocate(total_m, net.n_hidden(), stage),
    }
}

use alloc::vec::Vec;

use crate::error::{Error, Result};

use super::{GradientSet, LayerGrad, Network};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMoments {
    pub m: LayerGrad,
    pub v: LayerGrad,
}

/// First and second moments for every parameter tensor plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub layers: Vec<LayerMoments>,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerMoments { m: LayerGrad::zeros_like(l), v: LayerGrad::zeros_like(l) })
                .collect(),
            t: 0,
        }
    }

    /// Resizes the moments after neurons were appended to `net`. Existing
    /// entries keep their position (growth only appends rows and columns),
    /// new entries start at zero and `t` is untouched.
    pub fn grow_to(&mut self, net: &Network) -> Result<()> {
        if net.layers().len() != self.layers.len() {
            return Err(Error::Consistency(alloc::format!(
                "optimizer tracks {} layers, network has {}",
                self.layers.len(),
                net.layers().len()
            )));
        }
        for (mom, layer) in self.layers.iter_mut().zip(net.layers()) {
            let (rows, cols) = layer.weights.shape();
            for g in [&mut mom.m, &mut mom.v] {
                g.weights = g.weights.padded(rows, cols)?;
                g.biases.resize(rows, 0.0);
            }
        }
        Ok(())
    }

    fn matches(&self, net: &Network) -> bool {
        self.layers.len() == net.layers().len()
            && self
                .layers
                .iter()
                .zip(net.layers())
                .all(|(m, l)| m.m.weights.shape() == l.weights.shape() && m.v.biases.len() == l.biases.len())
    }
}

#[inline]
fn update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, c1: f64, c2: f64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
}

fn update_slice(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        update(&mut p[i], g[i], &mut m[i], &mut v[i], lr, c1, c2);
    }
}

/// One bias-corrected Adam update of every parameter of `net`.
pub fn adam_step(net: &mut Network, grads: &GradientSet, state: &mut AdamState, lr: f64) -> Result<()> {
    if lr.is_nan() || lr <= 0.0 {
        return Err(Error::Input(alloc::format!("learning rate {lr} must be positive")));
    }
    if !state.matches(net) || grads.layers.len() != net.layers().len() {
        return Err(Error::Consistency("optimizer state or gradients do not match the network".into()));
    }
    for (g, l) in grads.layers.iter().zip(net.layers()) {
        if g.weights.shape() != l.weights.shape() || g.biases.len() != l.biases.len() {
            return Err(Error::Consistency("gradient shapes do not match the network".into()));
        }
        if !g.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
    }
    state.t += 1;
    let c1 = 1.0 - libm::pow(ADAM_BETA1, state.t as f64);
    let c2 = 1.0 - libm::pow(ADAM_BETA2, state.t as f64);
    for ((layer, g), mom) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut state.layers) {
        update_slice(
            layer.weights.as_mut_slice(),
            g.weights.as_slice(),
            mom.m.weights.as_mut_slice(),
            mom.v.weights.as_mut_slice(),
            lr,
            c1,
            c2,
        );
        update_slice(&mut layer.biases, &g.biases, &mut mom.m.biases, &mut mom.v.biases, lr, c1, c2);
    }
    Ok(())
}

/// Adam moments for a free-standing set of parameters; used by extenders
/// that optimise only a slice of a network.
#[derive(Debug, Clone)]
pub(crate) struct SliceAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl SliceAdam {
    pub(crate) fn new(len: usize) -> Self {
        Self { m: alloc::vec![0.0; len], v: alloc::vec![0.0; len], t: 0 }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(ADAM_BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(ADAM_BETA2, self.t as f64);
        update_slice(params, grads, &mut self.m, &mut self.v, lr, c1, c2);
    }
}

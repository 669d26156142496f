//! Extenders without an adjustment phase.

use alloc::vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{kaiming_init, kaiming_init_fan_in, Network};

/// Appends `m` neurons with Kaiming incoming and outgoing weights (each with
/// its own fan-in after the insertion) and zero biases.
pub fn kaiming_extend<R: Rng + ?Sized>(
    net: &Network,
    layer: usize,
    m: usize,
    stage: u32,
    rng: &mut R,
) -> Result<Network> {
    net.check_hidden(layer)?;
    if m == 0 {
        return Ok(net.clone());
    }
    let host = &net.layers()[layer];
    let incoming = kaiming_init(m, host.n_in(), rng)?;
    let n_next = net.layers()[layer + 1].n_out();
    let outgoing = kaiming_init_fan_in(n_next, m, host.n_out() + m, rng)?;
    let mut out = net.clone();
    out.insert_neurons(layer, &incoming, &vec![0.0; m], &outgoing, stage)?;
    Ok(out)
}

/// Scales `m` so its Frobenius norm becomes `target`; returns the factor.
pub fn rescale_to_norm(m: &mut Matrix, target: f64) -> Result<f64> {
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("cannot rescale a zero matrix".into()));
    }
    let factor = target / norm;
    m.scale(factor);
    Ok(factor)
}

/// [`kaiming_extend`] followed by rescaling the grown incoming matrix and the
/// grown outgoing matrix of the next layer back to their previous Frobenius
/// norms.
pub fn frobenius_extend<R: Rng + ?Sized>(
    net: &Network,
    layer: usize,
    m: usize,
    stage: u32,
    rng: &mut R,
) -> Result<Network> {
    net.check_hidden(layer)?;
    let in_norm = net.layers()[layer].weights.frobenius_norm();
    let out_norm = net.layers()[layer + 1].weights.frobenius_norm();
    if in_norm == 0.0 || out_norm == 0.0 {
        return Err(Error::Degenerate(alloc::format!("layer {layer} or its successor has a zero weight matrix")));
    }
    if m == 0 {
        return Ok(net.clone());
    }
    let mut out = kaiming_extend(net, layer, m, stage, rng)?;
    rescale_to_norm(&mut out.layers_mut()[layer].weights, in_norm)?;
    rescale_to_norm(&mut out.layers_mut()[layer + 1].weights, out_norm)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{predict, OutputHead};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Network {
        Network::mlp(4, &[5, 3], 2, OutputHead::Identity, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn kaiming_changes_function_and_shapes() {
        let base = net(1);
        let x = Matrix::from_fn(8, 4, |r, c| ((r + 2 * c) % 5) as f64 / 5.0 + 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grown = kaiming_extend(&base, 0, 3, 1, &mut rng).unwrap();
        assert_eq!(grown.layers()[0].n_out(), 8);
        assert_eq!(grown.layers()[1].n_in(), 8);
        assert_ne!(predict(&base, &x).unwrap(), predict(&grown, &x).unwrap());
        let again = kaiming_extend(&base, 0, 3, 1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(grown, again);
        assert!(kaiming_extend(&base, 2, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn frobenius_restores_norms() {
        let base = net(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grown = frobenius_extend(&base, 1, 4, 1, &mut rng).unwrap();
        for l in [1, 2] {
            let before = base.layers()[l].weights.frobenius_norm();
            let after = grown.layers()[l].weights.frobenius_norm();
            assert!((before - after).abs() < 1e-9);
        }
        assert_eq!(frobenius_extend(&base, 1, 0, 1, &mut rng).unwrap(), base);
    }

    #[test]
    fn doubling_equal_norm_rows_scales_by_inverse_sqrt2() {
        let old = Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]]);
        let mut grown = old.clone();
        grown.append_rows(&Matrix::from_rows(&[[0.0, 5.0], [0.0, 0.0]])).unwrap();
        let f = rescale_to_norm(&mut grown, old.frobenius_norm()).unwrap();
        assert!((f - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((grown.get(0, 0) - 3.0 * core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero_norm_is_degenerate() {
        let mut base = net(5);
        base.layers_mut()[0].weights = Matrix::zeros(5, 4);
        let r = frobenius_extend(&base, 0, 2, 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }
}

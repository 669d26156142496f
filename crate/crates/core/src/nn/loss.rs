use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Targets;
use crate::error::{dim_err, input_err, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

/// Mean over batch and output dimensions of the squared difference.
pub fn loss_mse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(dim_err!("prediction {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    let n = pred.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred.as_slice().iter().zip(target.as_slice()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / n as f64)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>())
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(dim_err!("{} logit rows vs {} labels", logits.rows(), labels.len()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(input_err!("label {bad} out of range for {} classes", logits.cols()));
    }
    Ok(())
}

/// Mean of `-log softmax(logits)[label]`, computed through log-sum-exp.
pub fn loss_softmax_ce(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = labels.iter().enumerate().map(|(r, &y)| log_sum_exp(logits.row(r)) - logits.get(r, y)).sum();
    Ok(sum / labels.len() as f64)
}

/// Mean loss and its gradient with respect to the output preactivation.
pub fn output_loss_and_delta(output: &Matrix, targets: &Targets, kind: LossKind) -> Result<(f64, Matrix)> {
    match (kind, targets) {
        (LossKind::Mse, Targets::Dense(t)) => {
            let loss = loss_mse(output, t)?;
            let scale = 2.0 / output.as_slice().len().max(1) as f64;
            let data: Vec<f64> = output.as_slice().iter().zip(t.as_slice()).map(|(p, y)| scale * (p - y)).collect();
            Ok((loss, Matrix::from_vec(output.rows(), output.cols(), data)?))
        }
        (LossKind::SoftmaxCrossEntropy, Targets::Labels { labels, .. }) => {
            check_labels(output, labels)?;
            let b = labels.len().max(1) as f64;
            let mut delta = Matrix::zeros(output.rows(), output.cols());
            let mut sum = 0.0;
            for (r, &y) in labels.iter().enumerate() {
                let row = output.row(r);
                let lse = log_sum_exp(row);
                sum += lse - row[y];
                for (d, &z) in delta.row_mut(r).iter_mut().zip(row) {
                    *d = libm::exp(z - lse) / b;
                }
                delta.row_mut(r)[y] -= 1.0 / b;
            }
            Ok((sum / b, delta))
        }
        (kind, _) => Err(input_err!("targets do not fit loss {kind:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_examples() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(loss_mse(&a, &a).unwrap(), 0.0);
        let p = Matrix::from_rows(&[[1.0, 0.0]]);
        let t = Matrix::from_rows(&[[0.0, 0.0]]);
        assert_eq!(loss_mse(&p, &t).unwrap(), 0.5);
        assert!(loss_mse(&p, &a).is_err());
    }

    #[test]
    fn mse_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Matrix::from_fn(7, 5, |_, _| rng.random_range(-3.0..3.0));
        let t = Matrix::from_fn(7, 5, |_, _| rng.random_range(-3.0..3.0));
        let mut sum = 0.0;
        for r in 0..7 {
            for c in 0..5 {
                let d = p.get(r, c) - t.get(r, c);
                sum += d * d;
            }
        }
        assert!((loss_mse(&p, &t).unwrap() - sum / 35.0).abs() < 1e-12);
    }

    #[test]
    fn ce_examples() {
        let z = Matrix::from_rows(&[[0.0, 0.0]]);
        assert!((loss_softmax_ce(&z, &[0]).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
        let big = Matrix::from_rows(&[[1000.0, 0.0]]);
        let l = loss_softmax_ce(&big, &[0]).unwrap();
        assert!(l.is_finite() && l.abs() < 1e-12);
        let huge = Matrix::from_rows(&[[1e4, -1e4, 3.0]]);
        assert!(loss_softmax_ce(&huge, &[1]).unwrap().is_finite());
        assert!(loss_softmax_ce(&z, &[2]).is_err());
    }

    #[test]
    fn mismatched_target_kind() {
        let z = Matrix::zeros(1, 2);
        let t = Targets::Labels { labels: vec![0], n_classes: 2 };
        assert!(output_loss_and_delta(&z, &t, LossKind::Mse).is_err());
    }
}

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{dim_err, Result};
use crate::matrix::Matrix;

/// `n_out x n_in` matrix of i.i.d. `N(0, 2 / n_in)` entries.
pub fn kaiming_init<R: Rng + ?Sized>(n_out: usize, n_in: usize, rng: &mut R) -> Result<Matrix> {
    if n_out == 0 || n_in == 0 {
        return Err(dim_err!("kaiming init of a {n_out}x{n_in} matrix"));
    }
    kaiming_init_fan_in(n_out, n_in, n_in, rng)
}

/// `rows x cols` matrix of `N(0, 2 / fan_in)` entries, for blocks that are
/// only part of a weight matrix (such as new outgoing columns).
pub fn kaiming_init_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Result<Matrix> {
    if rows == 0 || cols == 0 || fan_in == 0 {
        return Err(dim_err!("kaiming init of a {rows}x{cols} block with fan-in {fan_in}"));
    }
    let normal = Normal::new(0.0, libm::sqrt(2.0 / fan_in as f64)).expect("positive std");
    Ok(Matrix::from_fn(rows, cols, |_, _| normal.sample(rng)))
}

//! Orthogonal weight initialization.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::array::{Array, Real};
use crate::error::{Error, Result};

/// Seeded orthogonal matrix of the given 2-D shape.
///
/// A Gaussian matrix is QR-factorized and the signs of Q's columns are fixed
/// by the diagonal of R, so the result is unique per seed. Tall shapes get
/// orthonormal columns, wide shapes orthonormal rows.
pub fn orthogonal_init<F: Real>(shape: &[usize], seed: u64) -> Result<Array<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    orthogonal_with_rng(shape, &mut rng)
}

pub fn orthogonal_with_rng<F: Real, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Array<F>> {
    if shape.len() != 2 {
        return Err(Error::shape(format!(
            "orthogonal init needs a 2-D shape, got {:?}",
            shape
        )));
    }
    let (rows, cols) = (shape[0], shape[1]);
    if rows == 0 || cols == 0 {
        return Ok(Array::zeros(shape));
    }
    let tall = rows >= cols;
    let (m, n) = if tall { (rows, cols) } else { (cols, rows) };
    let gaussian = DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal));
    let qr = gaussian.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            data.push(F::of(if tall { q[(i, j)] } else { q[(j, i)] }));
        }
    }
    Array::from_vec(shape, data)
}

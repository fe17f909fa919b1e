use super::array::{check_len, Array, Real};
use crate::error::{Error, Result};

/// Affine map `W·x + b`.
pub fn linear<F: Real>(w: &Array<F>, b: &Array<F>, x: &[F]) -> Result<Vec<F>> {
    if w.shape().len() != 2 {
        return Err(Error::shape(format!("weight must be 2-D, got {:?}", w.shape())));
    }
    check_len("linear input", x, w.cols())?;
    check_len("linear bias", b.data(), w.rows())?;
    let mut out = b.data().to_vec();
    w.matvec_acc(x, &mut out);
    Ok(out)
}

/// Backward of [`linear`]: accumulates `dW`, `db` and returns `dx`.
pub fn linear_backward<F: Real>(
    w: &Array<F>,
    x: &[F],
    dy: &[F],
    dw: &mut Array<F>,
    db: &mut Array<F>,
) -> Vec<F> {
    dw.outer_acc(dy, x);
    db.add_assign(dy);
    let mut dx = vec![F::zero(); x.len()];
    w.matvec_t_acc(dy, &mut dx);
    dx
}

pub fn log_softmax<F: Real>(z: &[F]) -> Vec<F> {
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
    z.iter().map(|&v| v - lse).collect()
}

pub fn softmax<F: Real>(z: &[F]) -> Vec<F> {
    log_softmax(z).into_iter().map(F::exp).collect()
}

/// Negative log-likelihood of `gold` under a probability vector.
pub fn nll<F: Real>(probs: &[F], gold: usize) -> Result<F> {
    match probs.get(gold) {
        Some(&p) => Ok(-p.ln()),
        None => Err(Error::shape(format!(
            "gold index {} outside {} classes",
            gold,
            probs.len()
        ))),
    }
}

/// Gradient of `nll(softmax(z), gold)` with respect to `z`: `p − onehot(gold)`.
pub fn softmax_nll_grad<F: Real>(probs: &[F], gold: usize) -> Vec<F> {
    let mut g = probs.to_vec();
    g[gold] -= F::one();
    g
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: PartialOrd + Copy>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

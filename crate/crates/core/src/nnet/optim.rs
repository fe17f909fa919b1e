//! Gradient clipping, SGD and Adam over flat parameter slices.

use super::array::Real;
use crate::error::{Error, Result};

/// Scales every gradient slice by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the norm measured before clipping.
pub fn clip_gradients<F: Real>(grads: &mut [&mut [F]], max_norm: F) -> Result<F> {
    let mut sq = F::zero();
    for g in grads.iter() {
        for &v in g.iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite("gradient contains NaN or Inf".into()));
            }
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient norm overflowed".into()));
    }
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(norm)
}

/// `p ← p − lr·g`
pub fn sgd_step<F: Real>(params: &mut [F], grads: &[F], lr: F) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!(
            "sgd: {} parameters vs {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First/second moment accumulators for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![F::zero(); len],
            v: vec![F::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update with β1=0.9, β2=0.999, ε=1e-8.
pub fn adam_step<F: Real>(state: &mut AdamState<F>, params: &mut [F], grads: &[F], lr: F) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::shape(format!(
            "adam: {} parameters, {} gradients, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let (b1, b2, eps) = (F::of(ADAM_BETA1), F::of(ADAM_BETA2), F::of(ADAM_EPSILON));
    let c1 = F::one() - b1.powi(state.t as i32);
    let c2 = F::one() - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (F::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (F::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn norm(gs: &[Vec<f64>]) -> f64 {
        gs.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn clipping_halves_when_norm_is_twice_max() {
        let mut a = vec![6.0f64, 0.0];
        let mut b = vec![8.0f64];
        let pre = clip_gradients(&mut [&mut a[..], &mut b[..]], 5.0).unwrap();
        assert_eq!(pre, 10.0);
        assert_eq!(a, vec![3.0, 0.0]);
        assert_eq!(b, vec![4.0]);
    }

    #[test]
    fn clipping_leaves_small_norms_alone() {
        let mut a = vec![3.0f64, 0.0];
        clip_gradients(&mut [&mut a[..]], 5.0).unwrap();
        assert_eq!(a, vec![3.0, 0.0]);
    }

    #[test]
    fn post_clip_norm_is_min_of_norm_and_max() {
        for (scale, max) in [(0.1, 1.0), (3.0, 1.0), (10.0, 7.5), (1.0, 100.0)] {
            let mut gs = vec![vec![scale, -2.0 * scale, 0.5 * scale], vec![scale * 1.5]];
            let before = norm(&gs);
            {
                let mut refs: Vec<&mut [f64]> = gs.iter_mut().map(|g| g.as_mut_slice()).collect();
                clip_gradients(&mut refs, max).unwrap();
            }
            assert_abs_diff_eq!(norm(&gs), before.min(max), epsilon = 1e-5);
        }
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut a = [f32::NAN];
        assert!(clip_gradients(&mut [&mut a[..]], 5.0).is_err());
    }

    #[test]
    fn sgd_basics() {
        let mut p = vec![1.0f32];
        sgd_step(&mut p, &[0.5], 0.0).unwrap();
        assert_eq!(p, vec![1.0]);
        sgd_step(&mut p, &[0.5], 1.0).unwrap();
        assert_eq!(p, vec![0.5]);
        assert!(sgd_step(&mut p, &[0.5, 1.0], 1.0).is_err());
    }

    // loss = ½ Σ aᵢ (pᵢ − cᵢ)²
    fn bowl(p: &[f64]) -> (f64, Vec<f64>) {
        let a = [1.0, 4.0, 0.5];
        let c = [2.0, -1.0, 0.5];
        let loss = (0..3).map(|i| 0.5 * a[i] * (p[i] - c[i]).powi(2)).sum();
        let grad = (0..3).map(|i| a[i] * (p[i] - c[i])).collect();
        (loss, grad)
    }

    #[test]
    fn sgd_descends_quadratic_bowl() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut last = bowl(&p).0;
        for _ in 0..10 {
            let (_, g) = bowl(&p);
            sgd_step(&mut p, &g, 0.2).unwrap();
            let (l, _) = bowl(&p);
            assert!(l < last);
            last = l;
        }
    }

    #[test]
    fn adam_ignores_zero_gradients() {
        let mut p = vec![1.0f32, -2.0];
        let mut s = AdamState::new(2);
        for _ in 0..50 {
            adam_step(&mut s, &mut p, &[0.0, 0.0], 0.02).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_sign() {
        let mut p = vec![0.0f64, 0.0];
        let mut s = AdamState::new(2);
        adam_step(&mut s, &mut p, &[0.3, -7.0], 0.02).unwrap();
        assert_abs_diff_eq!(p[0], -0.02, epsilon = 1e-7);
        assert_abs_diff_eq!(p[1], 0.02, epsilon = 1e-7);
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut s = AdamState::new(3);
        for _ in 0..2000 {
            let (_, g) = bowl(&p);
            adam_step(&mut s, &mut p, &g, 0.02).unwrap();
        }
        assert!(bowl(&p).0 < 1e-6);
    }
}

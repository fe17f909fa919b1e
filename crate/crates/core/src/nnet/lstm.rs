//! LSTM and bidirectional LSTM with hand-written backpropagation through time.
//!
//! Gate layout inside the stacked weight matrices is `[input, forget, output,
//! candidate]`, each block `hidden` rows tall. No peepholes.

use rand::Rng;

use super::array::{check_len, sigmoid, Array, Real};
use super::init::orthogonal_with_rng;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<F> {
    /// `4H × I`
    pub wx: Array<F>,
    /// `4H × H`
    pub wh: Array<F>,
    /// `4H`
    pub bias: Array<F>,
}

impl<F: Real> LstmParams<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            wx: Array::zeros(&[4 * hidden, input]),
            wh: Array::zeros(&[4 * hidden, hidden]),
            bias: Array::zeros(&[4 * hidden]),
        }
    }

    /// Each gate block of both weight matrices is orthogonal; the forget
    /// bias starts at 1, every other bias at 0.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(input, hidden);
        for gate in 0..4 {
            let bx: Array<F> = orthogonal_with_rng(&[hidden, input], rng)?;
            let bh: Array<F> = orthogonal_with_rng(&[hidden, hidden], rng)?;
            for r in 0..hidden {
                p.wx.row_mut(gate * hidden + r).copy_from_slice(bx.row(r));
                p.wh.row_mut(gate * hidden + r).copy_from_slice(bh.row(r));
            }
        }
        for r in hidden..2 * hidden {
            p.bias.data_mut()[r] = F::one();
        }
        Ok(p)
    }

    pub fn hidden(&self) -> usize {
        self.wh.cols()
    }

    pub fn input(&self) -> usize {
        self.wx.cols()
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.wh.shape() != [4 * h, h] || self.wx.rows() != 4 * h || self.bias.len() != 4 * h {
            return Err(Error::shape(format!(
                "inconsistent LSTM shapes wx={:?} wh={:?} bias={:?}",
                self.wx.shape(),
                self.wh.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn arrays(&self) -> [(&'static str, &Array<F>); 3] {
        [("wx", &self.wx), ("wh", &self.wh), ("bias", &self.bias)]
    }

    pub fn arrays_mut(&mut self) -> [(&'static str, &mut Array<F>); 3] {
        [("wx", &mut self.wx), ("wh", &mut self.wh), ("bias", &mut self.bias)]
    }

    pub fn cast<G: Real>(&self) -> LstmParams<G> {
        LstmParams {
            wx: self.wx.cast(),
            wh: self.wh.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// Everything one step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct StepCache<F> {
    x: Vec<F>,
    h_prev: Vec<F>,
    c_prev: Vec<F>,
    /// Activated gates, `[i, f, o, g]` blocks.
    gates: Vec<F>,
    c: Vec<F>,
    tanh_c: Vec<F>,
    h: Vec<F>,
}

impl<F: Real> StepCache<F> {
    pub fn h(&self) -> &[F] {
        &self.h
    }

    pub fn c(&self) -> &[F] {
        &self.c
    }
}

fn step_cached<F: Real>(p: &LstmParams<F>, x: &[F], h_prev: &[F], c_prev: &[F]) -> StepCache<F> {
    let hsz = p.hidden();
    let mut z = p.bias.data().to_vec();
    p.wx.matvec_acc(x, &mut z);
    p.wh.matvec_acc(h_prev, &mut z);
    for v in &mut z[..3 * hsz] {
        *v = sigmoid(*v);
    }
    for v in &mut z[3 * hsz..] {
        *v = v.tanh();
    }
    let mut c = vec![F::zero(); hsz];
    let mut tanh_c = vec![F::zero(); hsz];
    let mut h = vec![F::zero(); hsz];
    for k in 0..hsz {
        let (i, f, o, g) = (z[k], z[hsz + k], z[2 * hsz + k], z[3 * hsz + k]);
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        c,
        tanh_c,
        h,
    }
}

/// One recurrence step: returns `(h_t, c_t)`.
pub fn lstm_step<F: Real>(p: &LstmParams<F>, x: &[F], h_prev: &[F], c_prev: &[F]) -> Result<(Vec<F>, Vec<F>)> {
    p.validate()?;
    check_len("x_t", x, p.input())?;
    check_len("h_prev", h_prev, p.hidden())?;
    check_len("c_prev", c_prev, p.hidden())?;
    let s = step_cached(p, x, h_prev, c_prev);
    Ok((s.h, s.c))
}

/// Forward pass over a whole sequence starting from zero state.
#[derive(Clone, Debug)]
pub struct LstmTrace<F> {
    pub steps: Vec<StepCache<F>>,
}

impl<F: Real> LstmTrace<F> {
    pub fn hs(&self) -> impl Iterator<Item = &[F]> {
        self.steps.iter().map(|s| s.h.as_slice())
    }
}

pub fn lstm_forward<F: Real, X: AsRef<[F]>>(p: &LstmParams<F>, xs: &[X]) -> Result<LstmTrace<F>> {
    p.validate()?;
    let hsz = p.hidden();
    let mut h = vec![F::zero(); hsz];
    let mut c = vec![F::zero(); hsz];
    let mut steps = Vec::with_capacity(xs.len());
    for (t, x) in xs.iter().enumerate() {
        let x = x.as_ref();
        check_len(&format!("input at step {}", t), x, p.input())?;
        let s = step_cached(p, x, &h, &c);
        h.clone_from(&s.h);
        c.clone_from(&s.c);
        steps.push(s);
    }
    Ok(LstmTrace { steps })
}

/// Backpropagation through time. `dhs[t]` is the loss gradient arriving at
/// `h_t` from outside the recurrence. Parameter gradients are accumulated
/// into `grads`; input gradients are returned per step.
pub fn lstm_backward<F: Real>(
    p: &LstmParams<F>,
    trace: &LstmTrace<F>,
    dhs: &[Vec<F>],
    grads: &mut LstmParams<F>,
) -> Vec<Vec<F>> {
    let hsz = p.hidden();
    let n = trace.steps.len();
    let mut dxs = vec![Vec::new(); n];
    let mut dh_next = vec![F::zero(); hsz];
    let mut dc_next = vec![F::zero(); hsz];
    let mut dz = vec![F::zero(); 4 * hsz];
    for t in (0..n).rev() {
        let s = &trace.steps[t];
        let g = &s.gates;
        for k in 0..hsz {
            let dh = dhs[t][k] + dh_next[k];
            let (i, f, o, cand) = (g[k], g[hsz + k], g[2 * hsz + k], g[3 * hsz + k]);
            let dc = dh * o * (F::one() - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
            let d_o = dh * s.tanh_c[k];
            let d_i = dc * cand;
            let d_g = dc * i;
            let d_f = dc * s.c_prev[k];
            dc_next[k] = dc * f;
            dz[k] = d_i * i * (F::one() - i);
            dz[hsz + k] = d_f * f * (F::one() - f);
            dz[2 * hsz + k] = d_o * o * (F::one() - o);
            dz[3 * hsz + k] = d_g * (F::one() - cand * cand);
        }
        grads.wx.outer_acc(&dz, &s.x);
        grads.wh.outer_acc(&dz, &s.h_prev);
        grads.bias.add_assign(&dz);
        let mut dx = vec![F::zero(); p.input()];
        p.wx.matvec_t_acc(&dz, &mut dx);
        dxs[t] = dx;
        dh_next.iter_mut().for_each(|v| *v = F::zero());
        p.wh.matvec_t_acc(&dz, &mut dh_next);
    }
    dxs
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams<F> {
    pub fwd: LstmParams<F>,
    pub bwd: LstmParams<F>,
}

impl<F: Real> BiLstmParams<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstmParams {
            fwd: LstmParams::zeros(input, hidden),
            bwd: LstmParams::zeros(input, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(BiLstmParams {
            fwd: LstmParams::init(input, hidden, rng)?,
            bwd: LstmParams::init(input, hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn cast<G: Real>(&self) -> BiLstmParams<G> {
        BiLstmParams {
            fwd: self.fwd.cast(),
            bwd: self.bwd.cast(),
        }
    }
}

/// Output of a bidirectional pass. Both state lists are indexed by input
/// position, so `hs_b[t]` is the backward state after reading `x_{n-1}..x_t`.
#[derive(Clone, Debug)]
pub struct BiLstmOutput<F> {
    pub hs_f: Vec<Vec<F>>,
    pub hs_b: Vec<Vec<F>>,
    fwd: LstmTrace<F>,
    bwd: LstmTrace<F>,
}

impl<F: Real> BiLstmOutput<F> {
    /// Final forward state (after the last input).
    pub fn final_f(&self) -> &[F] {
        self.hs_f.last().expect("nonempty sequence")
    }

    /// Final backward state (after reading back to the first input).
    pub fn final_b(&self) -> &[F] {
        &self.hs_b[0]
    }

    /// `[h_f; h_b]` per position.
    pub fn concatenated(&self) -> Vec<Vec<F>> {
        self.hs_f
            .iter()
            .zip(&self.hs_b)
            .map(|(f, b)| f.iter().chain(b.iter()).copied().collect())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.hs_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hs_f.is_empty()
    }
}

pub fn bilstm<F: Real, X: AsRef<[F]>>(p: &BiLstmParams<F>, xs: &[X]) -> Result<BiLstmOutput<F>> {
    if xs.is_empty() {
        return Err(Error::invalid("bi-LSTM over an empty sequence"));
    }
    let fwd = lstm_forward(&p.fwd, xs)?;
    let reversed: Vec<&[F]> = xs.iter().rev().map(|x| x.as_ref()).collect();
    let bwd = lstm_forward(&p.bwd, &reversed)?;
    let hs_f = fwd.hs().map(<[F]>::to_vec).collect();
    let mut hs_b: Vec<Vec<F>> = bwd.hs().map(<[F]>::to_vec).collect();
    hs_b.reverse();
    Ok(BiLstmOutput { hs_f, hs_b, fwd, bwd })
}

/// Backward of [`bilstm`]. Gradients are given per input position for each
/// direction; returns the gradient for every input.
pub fn bilstm_backward<F: Real>(
    p: &BiLstmParams<F>,
    out: &BiLstmOutput<F>,
    dhs_f: &[Vec<F>],
    dhs_b: &[Vec<F>],
    grads: &mut BiLstmParams<F>,
) -> Vec<Vec<F>> {
    let mut dxs = lstm_backward(&p.fwd, &out.fwd, dhs_f, &mut grads.fwd);
    let dhs_b_rev: Vec<Vec<F>> = dhs_b.iter().rev().cloned().collect();
    let dxs_b = lstm_backward(&p.bwd, &out.bwd, &dhs_b_rev, &mut grads.bwd);
    let n = dxs.len();
    for (t, dx) in dxs.iter_mut().enumerate() {
        for (a, &b) in dx.iter_mut().zip(&dxs_b[n - 1 - t]) {
            *a += b;
        }
    }
    dxs
}

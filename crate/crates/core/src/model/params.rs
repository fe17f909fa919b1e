//! Parameters, forward pass and hand-written backward pass of the labeler.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::nnet::array::check_len;
use crate::nnet::gradcheck::ParamGroup;
use crate::nnet::lstm::{bilstm, bilstm_backward, BiLstmOutput, BiLstmParams};
use crate::nnet::ops::{argmax, linear, linear_backward, log_softmax};
use crate::nnet::{orthogonal_init, Array, Real};

/// Word composition: bi-LSTM over subword embeddings, then
/// `w = W_f·h_f + W_b·h_b + b` over the final state of each direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Composition<F> {
    pub lstm: BiLstmParams<F>,
    /// `E × H`
    pub w_f: Array<F>,
    /// `E × H`
    pub w_b: Array<F>,
    /// `E`
    pub bias: Array<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    /// `V × E`; subword units, or whole words for the word model.
    pub embedding: Array<F>,
    /// Absent for the whole-word model.
    pub composition: Option<Composition<F>>,
    pub labeler: Vec<BiLstmParams<F>>,
    /// `L × 2H`
    pub out_w: Array<F>,
    /// `L`
    pub out_b: Array<F>,
}

/// One labeling instance: subword ids per token, the predicate position and
/// gold label ids (empty when unlabeled).
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub words: Vec<Vec<usize>>,
    pub predicate: usize,
    pub gold: Vec<usize>,
}

/// Shapes of every parameter array, in canonical order.
pub fn param_shapes(config: &ModelConfig, vocab_size: usize, n_labels: usize) -> Vec<(String, Vec<usize>)> {
    let (e, h) = (config.embedding_size, config.hidden_size);
    let lstm = |prefix: &str, input: usize| {
        vec![
            (format!("{}.wx", prefix), vec![4 * h, input]),
            (format!("{}.wh", prefix), vec![4 * h, h]),
            (format!("{}.bias", prefix), vec![4 * h]),
        ]
    };
    let mut shapes = vec![("embedding".to_string(), vec![vocab_size, e])];
    if config.rho.composes() {
        shapes.extend(lstm("composition.fwd", e));
        shapes.extend(lstm("composition.bwd", e));
        shapes.push(("composition.w_f".into(), vec![e, h]));
        shapes.push(("composition.w_b".into(), vec![e, h]));
        shapes.push(("composition.bias".into(), vec![e]));
    }
    for l in 0..config.num_layers {
        let input = if l == 0 { e + config.predicate_flag_size } else { 2 * h };
        shapes.extend(lstm(&format!("labeler.{}.fwd", l), input));
        shapes.extend(lstm(&format!("labeler.{}.bwd", l), input));
    }
    shapes.push(("output.w".into(), vec![n_labels, 2 * h]));
    shapes.push(("output.b".into(), vec![n_labels]));
    shapes
}

impl<F: Real> ModelParams<F> {
    pub fn zeros(config: &ModelConfig, vocab_size: usize, n_labels: usize) -> Self {
        let (e, h) = (config.embedding_size, config.hidden_size);
        ModelParams {
            embedding: Array::zeros(&[vocab_size, e]),
            composition: config.rho.composes().then(|| Composition {
                lstm: BiLstmParams::zeros(e, h),
                w_f: Array::zeros(&[e, h]),
                w_b: Array::zeros(&[e, h]),
                bias: Array::zeros(&[e]),
            }),
            labeler: (0..config.num_layers)
                .map(|l| {
                    let input = if l == 0 { e + config.predicate_flag_size } else { 2 * h };
                    BiLstmParams::zeros(input, h)
                })
                .collect(),
            out_w: Array::zeros(&[n_labels, 2 * h]),
            out_b: Array::zeros(&[n_labels]),
        }
    }

    /// Orthogonal weights, LSTM forget biases at 1, other biases at 0.
    pub fn init(config: &ModelConfig, vocab_size: usize, n_labels: usize) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 || n_labels == 0 {
            return Err(Error::invalid("vocabulary and label set must be nonempty"));
        }
        let (e, h) = (config.embedding_size, config.hidden_size);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ortho = |shape: &[usize]| -> Result<Array<F>> {
            crate::nnet::init::orthogonal_with_rng(shape, &mut rng)
        };
        let embedding = ortho(&[vocab_size, e])?;
        let composition = if config.rho.composes() {
            let w_f = ortho(&[e, h])?;
            let w_b = ortho(&[e, h])?;
            let lstm = BiLstmParams::init(e, h, &mut rng)?;
            Some(Composition {
                lstm,
                w_f,
                w_b,
                bias: Array::zeros(&[e]),
            })
        } else {
            None
        };
        let mut labeler = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let input = if l == 0 { e + config.predicate_flag_size } else { 2 * h };
            labeler.push(BiLstmParams::init(input, h, &mut rng)?);
        }
        let out_w = orthogonal_init(&[n_labels, 2 * h], config.seed.wrapping_add(1))?;
        Ok(ModelParams {
            embedding,
            composition,
            labeler,
            out_w,
            out_b: Array::zeros(&[n_labels]),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn n_labels(&self) -> usize {
        self.out_b.len()
    }

    /// Every array with its canonical name, in canonical order.
    pub fn arrays(&self) -> Vec<(String, &Array<F>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        if let Some(c) = &self.composition {
            for (dir, p) in [("fwd", &c.lstm.fwd), ("bwd", &c.lstm.bwd)] {
                for (n, a) in p.arrays() {
                    out.push((format!("composition.{}.{}", dir, n), a));
                }
            }
            out.push(("composition.w_f".into(), &c.w_f));
            out.push(("composition.w_b".into(), &c.w_b));
            out.push(("composition.bias".into(), &c.bias));
        }
        for (l, layer) in self.labeler.iter().enumerate() {
            for (dir, p) in [("fwd", &layer.fwd), ("bwd", &layer.bwd)] {
                for (n, a) in p.arrays() {
                    out.push((format!("labeler.{}.{}.{}", l, dir, n), a));
                }
            }
        }
        out.push(("output.w".into(), &self.out_w));
        out.push(("output.b".into(), &self.out_b));
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<(String, &mut Array<F>)> {
        let mut out = vec![("embedding".to_string(), &mut self.embedding)];
        if let Some(c) = &mut self.composition {
            for (dir, p) in [("fwd", &mut c.lstm.fwd), ("bwd", &mut c.lstm.bwd)] {
                for (n, a) in p.arrays_mut() {
                    out.push((format!("composition.{}.{}", dir, n), a));
                }
            }
            out.push(("composition.w_f".into(), &mut c.w_f));
            out.push(("composition.w_b".into(), &mut c.w_b));
            out.push(("composition.bias".into(), &mut c.bias));
        }
        for (l, layer) in self.labeler.iter_mut().enumerate() {
            for (dir, p) in [("fwd", &mut layer.fwd), ("bwd", &mut layer.bwd)] {
                for (n, a) in p.arrays_mut() {
                    out.push((format!("labeler.{}.{}.{}", l, dir, n), a));
                }
            }
        }
        out.push(("output.w".into(), &mut self.out_w));
        out.push(("output.b".into(), &mut self.out_b));
        out
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            embedding: self.embedding.cast(),
            composition: self.composition.as_ref().map(|c| Composition {
                lstm: c.lstm.cast(),
                w_f: c.w_f.cast(),
                w_b: c.w_b.cast(),
                bias: c.bias.cast(),
            }),
            labeler: self.labeler.iter().map(BiLstmParams::cast).collect(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    /// All values concatenated in canonical order.
    pub fn flatten(&self) -> Vec<F> {
        self.arrays().iter().flat_map(|(_, a)| a.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, theta: &[F]) -> Result<()> {
        check_len("flat parameter vector", theta, self.num_params())?;
        let mut offset = 0;
        for (_, a) in self.arrays_mut() {
            let n = a.len();
            a.data_mut().copy_from_slice(&theta[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Named ranges into [`ModelParams::flatten`], one per array.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut offset = 0;
        self.arrays()
            .into_iter()
            .map(|(name, a)| {
                let range = offset..offset + a.len();
                offset += a.len();
                ParamGroup { name, range }
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.arrays().iter().all(|(_, a)| a.all_finite())
    }

    /// Word vector from subword ids (composition) or a whole-word id.
    pub fn encode_word(&self, ids: &[usize]) -> Result<Vec<F>> {
        Ok(self.encode_word_traced(ids)?.0)
    }

    fn embed(&self, id: usize) -> Result<&[F]> {
        if id >= self.embedding.rows() {
            return Err(Error::invalid(format!(
                "unit id {} outside vocabulary of {}",
                id,
                self.embedding.rows()
            )));
        }
        Ok(self.embedding.row(id))
    }

    fn encode_word_traced(&self, ids: &[usize]) -> Result<(Vec<F>, Option<BiLstmOutput<F>>)> {
        if ids.is_empty() {
            return Err(Error::invalid("token has no subword units"));
        }
        match &self.composition {
            None => {
                if ids.len() != 1 {
                    return Err(Error::invalid("whole-word model takes exactly one id per token"));
                }
                Ok((self.embed(ids[0])?.to_vec(), None))
            }
            Some(c) => {
                let units = ids.iter().map(|&i| self.embed(i)).collect::<Result<Vec<_>>>()?;
                let out = bilstm(&c.lstm, &units)?;
                let mut w = c.bias.data().to_vec();
                c.w_f.matvec_acc(out.final_f(), &mut w);
                c.w_b.matvec_acc(out.final_b(), &mut w);
                Ok((w, Some(out)))
            }
        }
    }

    fn forward_traced(&self, words: &[Vec<usize>], predicate: usize) -> Result<Trace<F>> {
        let mut vectors = Vec::with_capacity(words.len());
        let mut compositions = Vec::with_capacity(words.len());
        for ids in words {
            let (w, c) = self.encode_word_traced(ids)?;
            vectors.push(w);
            compositions.push(c);
        }
        let flag_size = self.labeler[0].fwd.input() - self.embedding.cols();
        let mut input = build_inputs(&vectors, predicate, flag_size)?;
        let mut layers = Vec::with_capacity(self.labeler.len());
        for p in &self.labeler {
            let out = bilstm(p, &input)?;
            let next = out.concatenated();
            layers.push((input, out));
            input = next;
        }
        let log_probs = input
            .iter()
            .map(|h| linear(&self.out_w, &self.out_b, h).map(|z| log_softmax(&z)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trace {
            compositions,
            layers,
            top: input,
            log_probs,
        })
    }

    /// Per-token log-probabilities over the label set.
    pub fn label_distributions(&self, words: &[Vec<usize>], predicate: usize) -> Result<Vec<Vec<F>>> {
        Ok(self.forward_traced(words, predicate)?.log_probs)
    }

    /// Summed token NLL of the gold sequence.
    pub fn sequence_loss(&self, inst: &Instance) -> Result<F> {
        let lp = self.label_distributions(&inst.words, inst.predicate)?;
        gold_loss(&lp, &inst.gold)
    }

    /// Per-token argmax, ties to the lowest label index.
    pub fn predict(&self, words: &[Vec<usize>], predicate: usize) -> Result<Vec<usize>> {
        Ok(self
            .label_distributions(words, predicate)?
            .iter()
            .map(|lp| argmax(lp))
            .collect())
    }

    /// Loss of one instance; its gradient is accumulated into `grads`.
    pub fn loss_and_grad(&self, inst: &Instance, grads: &mut Gradients<F>) -> Result<F> {
        let trace = self.forward_traced(&inst.words, inst.predicate)?;
        let loss = gold_loss(&trace.log_probs, &inst.gold)?;
        let g = &mut grads.params;
        let h = self.labeler[0].hidden();
        let mut dtop = Vec::with_capacity(trace.top.len());
        for ((lp, x), &gold) in trace.log_probs.iter().zip(&trace.top).zip(&inst.gold) {
            let mut dz: Vec<F> = lp.iter().map(|v| v.exp()).collect();
            dz[gold] -= F::one();
            dtop.push(linear_backward(&self.out_w, x, &dz, &mut g.out_w, &mut g.out_b));
        }
        let mut dh = dtop;
        for (l, (_, out)) in trace.layers.iter().enumerate().rev() {
            let (df, db): (Vec<Vec<F>>, Vec<Vec<F>>) =
                dh.iter().map(|d| (d[..h].to_vec(), d[h..].to_vec())).unzip();
            dh = bilstm_backward(&self.labeler[l], out, &df, &db, &mut g.labeler[l]);
        }
        let e = self.embedding.cols();
        for ((ids, comp), dx) in inst.words.iter().zip(&trace.compositions).zip(&dh) {
            let dw = &dx[..e];
            match (comp, &self.composition, &mut g.composition) {
                (Some(out), Some(c), Some(gc)) => {
                    gc.w_f.outer_acc(dw, out.final_f());
                    gc.w_b.outer_acc(dw, out.final_b());
                    gc.bias.add_assign(dw);
                    let n = ids.len();
                    let mut dhf = vec![vec![F::zero(); h]; n];
                    let mut dhb = vec![vec![F::zero(); h]; n];
                    c.w_f.matvec_t_acc(dw, &mut dhf[n - 1]);
                    c.w_b.matvec_t_acc(dw, &mut dhb[0]);
                    let dunits = bilstm_backward(&c.lstm, out, &dhf, &dhb, &mut gc.lstm);
                    for (&id, du) in ids.iter().zip(&dunits) {
                        add_row(&mut g.embedding, id, du);
                        grads.touched.insert(id);
                    }
                }
                _ => {
                    add_row(&mut g.embedding, ids[0], dw);
                    grads.touched.insert(ids[0]);
                }
            }
        }
        Ok(loss)
    }
}

fn add_row<F: Real>(a: &mut Array<F>, row: usize, v: &[F]) {
    for (x, &d) in a.row_mut(row).iter_mut().zip(v) {
        *x += d;
    }
}

fn gold_loss<F: Real>(log_probs: &[Vec<F>], gold: &[usize]) -> Result<F> {
    if gold.len() != log_probs.len() {
        return Err(Error::shape(format!(
            "{} gold labels for {} tokens",
            gold.len(),
            log_probs.len()
        )));
    }
    let mut loss = F::zero();
    for (lp, &g) in log_probs.iter().zip(gold) {
        let v = lp
            .get(g)
            .ok_or_else(|| Error::shape(format!("gold label {} outside {} labels", g, lp.len())))?;
        loss -= *v;
    }
    Ok(loss)
}

struct Trace<F> {
    compositions: Vec<Option<BiLstmOutput<F>>>,
    /// (input sequence, output) per labeler layer
    layers: Vec<(Vec<Vec<F>>, BiLstmOutput<F>)>,
    top: Vec<Vec<F>>,
    log_probs: Vec<Vec<F>>,
}

/// `x_t = [w_t; pf_t]`, the flag repeated `flag_size` times: 1 at the
/// predicate, 0 elsewhere.
pub fn build_inputs<F: Real>(vectors: &[Vec<F>], predicate: usize, flag_size: usize) -> Result<Vec<Vec<F>>> {
    if predicate >= vectors.len() {
        return Err(Error::invalid(format!(
            "predicate index {} outside sentence of {} tokens",
            predicate,
            vectors.len()
        )));
    }
    Ok(vectors
        .iter()
        .enumerate()
        .map(|(t, w)| {
            let flag = if t == predicate { F::one() } else { F::zero() };
            w.iter().copied().chain(std::iter::repeat_n(flag, flag_size)).collect()
        })
        .collect())
}

/// Gradient buffers shaped like the parameters, plus the embedding rows
/// touched since the last clear (only those rows are nonzero).
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    pub params: ModelParams<F>,
    pub touched: BTreeSet<usize>,
}

impl<F: Real> Gradients<F> {
    pub fn for_params(p: &ModelParams<F>) -> Self {
        let mut params = p.clone();
        for (_, a) in params.arrays_mut() {
            a.fill(F::zero());
        }
        Gradients {
            params,
            touched: BTreeSet::new(),
        }
    }

    pub fn clear(&mut self) {
        for id in std::mem::take(&mut self.touched) {
            self.params.embedding.row_mut(id).fill(F::zero());
        }
        for (name, a) in self.params.arrays_mut() {
            if name != "embedding" {
                a.fill(F::zero());
            }
        }
    }

    /// Mutable views of every nonzero gradient region.
    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let touched = &self.touched;
        let mut out = Vec::new();
        for (name, a) in self.params.arrays_mut() {
            if name == "embedding" {
                let cols = a.cols();
                out.extend(
                    a.data_mut()
                        .chunks_exact_mut(cols)
                        .enumerate()
                        .filter(|(i, _)| touched.contains(i))
                        .map(|(_, r)| r),
                );
            } else {
                out.push(a.data_mut());
            }
        }
        out
    }

    /// Dense gradient in [`ModelParams::flatten`] order.
    pub fn flatten(&self) -> Vec<F> {
        self.params.flatten()
    }
}

/// `p ← p − lr·g` over the nonzero gradient regions.
pub fn apply_sgd<F: Real>(params: &mut ModelParams<F>, grads: &Gradients<F>, lr: F) {
    let touched = &grads.touched;
    for ((name, p), (_, g)) in params.arrays_mut().into_iter().zip(grads.params.arrays()) {
        if name == "embedding" {
            for &r in touched {
                for (x, &d) in p.row_mut(r).iter_mut().zip(g.row(r)) {
                    *x -= lr * d;
                }
            }
        } else {
            for (x, &d) in p.data_mut().iter_mut().zip(g.data()) {
                *x -= lr * d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ColumnMode;
    use crate::nnet::gradcheck::{finite_difference_check, DEFAULT_STEP};
    use crate::subword::Rho;

    fn config(rho: Rho, layers: usize) -> ModelConfig {
        ModelConfig {
            rho,
            column_mode: ColumnMode::Gold,
            embedding_size: 3,
            hidden_size: 2,
            num_layers: layers,
            predicate_flag_size: 1,
            min_freq: 1,
            seed: 11,
        }
    }

    fn toy(rho: Rho) -> Instance {
        let words = if rho.composes() {
            vec![vec![1, 2], vec![3], vec![0, 4, 1]]
        } else {
            vec![vec![1], vec![3], vec![0]]
        };
        Instance {
            words,
            predicate: 1,
            gold: vec![1, 0, 1],
        }
    }

    fn perturbed(config: &ModelConfig) -> ModelParams<f64> {
        let mut p: ModelParams<f64> = ModelParams::init(config, 5, 2).unwrap();
        // move biases off their init values so every group has signal
        let n = p.num_params();
        let theta: Vec<f64> = p
            .flatten()
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.1 * ((i * 7919 % n) as f64 / n as f64 - 0.5))
            .collect();
        p.unflatten(&theta).unwrap();
        p
    }

    fn check(rho: Rho, layers: usize) {
        let config = config(rho, layers);
        let p = perturbed(&config);
        let inst = toy(rho);
        let mut grads = Gradients::for_params(&p);
        p.loss_and_grad(&inst, &mut grads).unwrap();
        let theta = p.flatten();
        let report = finite_difference_check(&theta, &grads.flatten(), &p.groups(), DEFAULT_STEP, |t| {
            let mut q = p.clone();
            q.unflatten(t).unwrap();
            q.sequence_loss(&inst).unwrap()
        });
        assert!(report.passes(1e-4), "{:#?}", report);
        assert!(report.groups.len() > 5);
    }

    #[test]
    fn gradients_match_finite_differences_char() {
        check(Rho::Char, 1);
    }

    #[test]
    fn gradients_match_finite_differences_two_layers() {
        check(Rho::Char3, 2);
    }

    #[test]
    fn gradients_match_finite_differences_word() {
        check(Rho::Word, 1);
    }

    #[test]
    fn uniform_model_loss() {
        let config = config(Rho::Char, 1);
        let p: ModelParams<f64> = ModelParams::zeros(&config, 5, 4);
        let inst = Instance {
            words: vec![vec![1]; 5],
            predicate: 0,
            gold: vec![0, 1, 2, 3, 0],
        };
        let loss = p.sequence_loss(&inst).unwrap();
        assert!((loss - 5.0 * 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn flags_mark_only_the_predicate() {
        let v = vec![vec![0.5f64, 0.5]; 4];
        let a = build_inputs(&v, 2, 1).unwrap();
        let b = build_inputs(&v, 0, 1).unwrap();
        assert_eq!(a.iter().map(|x| x[2]).sum::<f64>(), 1.0);
        let differing: Vec<usize> = (0..4).filter(|&t| a[t] != b[t]).collect();
        assert_eq!(differing, vec![0, 2]);
        assert!(build_inputs(&v, 4, 1).is_err());
    }

    #[test]
    fn encode_word_is_pure_and_checks_ids() {
        let config = config(Rho::Char, 1);
        let p: ModelParams<f32> = ModelParams::init(&config, 5, 2).unwrap();
        assert_eq!(p.encode_word(&[1, 2]).unwrap(), p.encode_word(&[1, 2]).unwrap());
        assert_eq!(p.encode_word(&[1]).unwrap().len(), 3);
        assert!(p.encode_word(&[9]).is_err());
        assert!(p.encode_word(&[]).is_err());
    }

    #[test]
    fn distributions_are_normalized() {
        let config = config(Rho::Char, 2);
        let p: ModelParams<f32> = ModelParams::init(&config, 5, 3).unwrap();
        let lp = p.label_distributions(&toy(Rho::Char).words, 0).unwrap();
        assert_eq!(lp.len(), 3);
        for d in lp {
            let s: f32 = d.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shapes_match_declared_layout() {
        for rho in [Rho::Word, Rho::Morph] {
            let config = config(rho, 2);
            let p: ModelParams<f32> = ModelParams::init(&config, 7, 4).unwrap();
            let declared = param_shapes(&config, 7, 4);
            let actual: Vec<(String, Vec<usize>)> =
                p.arrays().into_iter().map(|(n, a)| (n, a.shape().to_vec())).collect();
            assert_eq!(declared, actual);
        }
    }
}

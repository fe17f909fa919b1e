//! Combining label distributions of several base models: averaging and a
//! small stacked combiner, plus the on-disk distribution dump.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LabelSet, Sentence};
use crate::error::{Error, Result};
use crate::model::{FrameDistribution, ModelConfig};
use crate::nnet::array::{check_len, sigmoid};
use crate::nnet::ops::log_softmax;
use crate::nnet::{adam_step, orthogonal_init, AdamState, Array, Real};
use crate::textio::{fingerprint, KeyValues};
use crate::trainer::TrainConfig;

pub const DIST_MAGIC: &str = "SRL-DIST 1";

/// Fingerprint of everything that must agree between ensemble members:
/// the training recipe and all model settings except the input unit.
pub fn member_fingerprint(model: &ModelConfig, train: &TrainConfig) -> String {
    let text = format!(
        "{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}",
        model.embedding_size,
        model.hidden_size,
        model.num_layers,
        model.predicate_flag_size,
        model.min_freq,
        model.seed,
        train.initial_lr,
        train.lr_halving_patience,
        train.early_stop_patience,
        train.max_epochs,
        train.clip_norm,
        train.seed,
        train.eval_every
    );
    fingerprint(&text)
}

/// Checks that every member covers the same frames with the same widths.
fn check_aligned(models: &[&[FrameDistribution]]) -> Result<()> {
    let first = models.first().ok_or_else(|| Error::invalid("no base models given"))?;
    for (m, other) in models.iter().enumerate().skip(1) {
        if other.len() != first.len() {
            return Err(Error::shape(format!(
                "model {} covers {} frames, model 0 covers {}",
                m,
                other.len(),
                first.len()
            )));
        }
        for (a, b) in first.iter().zip(other.iter()) {
            if a.sentence_id != b.sentence_id || a.predicate != b.predicate || a.log_probs.len() != b.log_probs.len() {
                return Err(Error::shape(format!(
                    "model {} frame ({}, {}) does not match model 0 frame ({}, {})",
                    m, b.sentence_id, b.predicate, a.sentence_id, a.predicate
                )));
            }
            for (x, y) in a.log_probs.iter().zip(&b.log_probs) {
                if x.len() != y.len() {
                    return Err(Error::shape("models disagree on the label set size"));
                }
            }
        }
    }
    Ok(())
}

/// Elementwise mean of the members' log-probabilities, renormalized.
pub fn average_combine(models: &[&[FrameDistribution]]) -> Result<Vec<FrameDistribution>> {
    check_aligned(models)?;
    let n = models.len() as f32;
    Ok((0..models[0].len())
        .map(|f| {
            let base = &models[0][f];
            let log_probs = (0..base.log_probs.len())
                .map(|t| {
                    let mut mean = vec![0.0f32; base.log_probs[t].len()];
                    for m in models {
                        for (acc, &v) in mean.iter_mut().zip(&m[f].log_probs[t]) {
                            *acc += v;
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= n);
                    log_softmax(&mean)
                })
                .collect();
            FrameDistribution {
                sentence_id: base.sentence_id,
                predicate: base.predicate,
                log_probs,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackerConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for StackerConfig {
    fn default() -> Self {
        StackerConfig {
            hidden: 64,
            lr: 0.02,
            epochs: 25,
            seed: 1,
        }
    }
}

/// `n·L` member log-probs → sigmoid hidden layer → linear → log-softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Stacker<F> {
    pub n_models: usize,
    pub n_labels: usize,
    /// `hidden × n·L`
    pub w1: Array<F>,
    pub b1: Array<F>,
    /// `L × hidden`
    pub w2: Array<F>,
    pub b2: Array<F>,
}

impl<F: Real> Stacker<F> {
    pub fn init(n_models: usize, n_labels: usize, hidden: usize, seed: u64) -> Result<Self> {
        if n_models == 0 || n_labels == 0 || hidden == 0 {
            return Err(Error::Config("stacker sizes must be at least 1".into()));
        }
        Ok(Stacker {
            n_models,
            n_labels,
            w1: orthogonal_init(&[hidden, n_models * n_labels], seed)?,
            b1: Array::zeros(&[hidden]),
            w2: orthogonal_init(&[n_labels, hidden], seed.wrapping_add(1))?,
            b2: Array::zeros(&[n_labels]),
        })
    }

    pub fn input_width(&self) -> usize {
        self.n_models * self.n_labels
    }

    fn hidden_of(&self, x: &[F]) -> Vec<F> {
        let mut h = self.b1.data().to_vec();
        self.w1.matvec_acc(x, &mut h);
        h.into_iter().map(sigmoid).collect()
    }

    /// Log-distribution over labels for one token's stacked input.
    pub fn forward(&self, x: &[F]) -> Result<Vec<F>> {
        check_len("stacker input", x, self.input_width())?;
        let h = self.hidden_of(x);
        let mut z = self.b2.data().to_vec();
        self.w2.matvec_acc(&h, &mut z);
        Ok(log_softmax(&z))
    }

    /// NLL of `gold`; gradients are accumulated into `g`.
    pub fn loss_and_grad(&self, x: &[F], gold: usize, g: &mut Stacker<F>) -> Result<F> {
        check_len("stacker input", x, self.input_width())?;
        if gold >= self.n_labels {
            return Err(Error::shape(format!("gold label {} outside {} labels", gold, self.n_labels)));
        }
        let h = self.hidden_of(x);
        let mut z = self.b2.data().to_vec();
        self.w2.matvec_acc(&h, &mut z);
        let lp = log_softmax(&z);
        let mut dz: Vec<F> = lp.iter().map(|v| v.exp()).collect();
        dz[gold] -= F::one();
        g.w2.outer_acc(&dz, &h);
        g.b2.add_assign(&dz);
        let mut dh = vec![F::zero(); h.len()];
        self.w2.matvec_t_acc(&dz, &mut dh);
        let da: Vec<F> = dh.iter().zip(&h).map(|(&d, &s)| d * s * (F::one() - s)).collect();
        g.w1.outer_acc(&da, x);
        g.b1.add_assign(&da);
        Ok(-lp[gold])
    }

    fn arrays_mut(&mut self) -> [&mut Array<F>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for a in z.arrays_mut() {
            a.fill(F::zero());
        }
        z
    }
}

fn stacked_input(models: &[&[FrameDistribution]], f: usize, t: usize) -> Vec<f32> {
    models.iter().flat_map(|m| m[f].log_probs[t].iter().copied()).collect()
}

/// Gold label ids per frame, in frame order.
pub fn gold_ids(sentences: &[Sentence], labels: &LabelSet) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for s in sentences {
        for col in 0..s.predicates().len() {
            out.push(
                s.tokens()
                    .iter()
                    .map(|t| {
                        labels
                            .id(&t.apreds[col])
                            .ok_or_else(|| Error::invalid(format!("label `{}` is not in the label set", t.apreds[col])))
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    Ok(out)
}

/// Trains the combiner with Adam, one token per update, on member
/// distributions over some split and that split's gold labels.
pub fn train_stacker(models: &[&[FrameDistribution]], gold: &[Vec<usize>], config: &StackerConfig) -> Result<Stacker<f32>> {
    check_aligned(models)?;
    if gold.len() != models[0].len() {
        return Err(Error::shape(format!(
            "{} gold frames for {} distribution frames",
            gold.len(),
            models[0].len()
        )));
    }
    let n_labels = models[0]
        .iter()
        .flat_map(|f| f.log_probs.first())
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::invalid("no tokens to train the combiner on"))?;
    let mut positions = Vec::new();
    for (f, g) in gold.iter().enumerate() {
        if g.len() != models[0][f].log_probs.len() {
            return Err(Error::shape(format!("frame {} gold length differs from its distributions", f)));
        }
        positions.extend((0..g.len()).map(|t| (f, t)));
    }
    let mut stacker = Stacker::<f32>::init(models.len(), n_labels, config.hidden, config.seed)?;
    let mut states: Vec<AdamState<f32>> = stacker.clone().arrays_mut().iter().map(|a| AdamState::new(a.len())).collect();
    let mut grad = stacker.zeroed();
    let lr = config.lr as f32;
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        positions.shuffle(&mut rng);
        for &(f, t) in &positions {
            for a in grad.arrays_mut() {
                a.fill(0.0);
            }
            let x = stacked_input(models, f, t);
            let loss = stacker.loss_and_grad(&x, gold[f][t], &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: "combiner loss is not finite".into(),
                });
            }
            for ((p, g), s) in stacker.arrays_mut().into_iter().zip(grad.arrays_mut()).zip(&mut states) {
                adam_step(s, p.data_mut(), g.data(), lr)?;
            }
        }
    }
    Ok(stacker)
}

/// Runs the trained combiner over every token of every frame.
pub fn stacked_combine(stacker: &Stacker<f32>, models: &[&[FrameDistribution]]) -> Result<Vec<FrameDistribution>> {
    check_aligned(models)?;
    if models.len() != stacker.n_models {
        return Err(Error::shape(format!(
            "combiner was trained on {} models, got {}",
            stacker.n_models,
            models.len()
        )));
    }
    (0..models[0].len())
        .map(|f| {
            let base = &models[0][f];
            let log_probs = (0..base.log_probs.len())
                .map(|t| stacker.forward(&stacked_input(models, f, t)))
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameDistribution {
                sentence_id: base.sentence_id,
                predicate: base.predicate,
                log_probs,
            })
        })
        .collect()
}

/// Member distributions over one corpus, as written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionFile {
    pub labels: LabelSet,
    /// See [`member_fingerprint`].
    pub member_fingerprint: String,
    /// Unit type of the model that produced the distributions.
    pub rho: String,
    pub frames: Vec<FrameDistribution>,
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(format!("{} {} does not fit in 32 bits", what, v)))
}

impl DistributionFile {
    /// Magic line, key-value header, blank line, then per frame `u32`
    /// sentence id, `u32` predicate position, `u32` token count and
    /// `tokens × labels` little-endian `f32` log-probabilities.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut kv = KeyValues::new();
        kv.push("labels", self.labels.to_text());
        kv.push("label_fingerprint", self.labels.fingerprint());
        kv.push("member_fingerprint", &self.member_fingerprint);
        kv.push("rho", &self.rho);
        kv.push("frames", self.frames.len());
        write!(w, "{}\n{}\n", DIST_MAGIC, kv.to_text())?;
        let width = self.labels.len();
        for f in &self.frames {
            w.write_all(&u32_of(f.sentence_id, "sentence id")?.to_le_bytes())?;
            w.write_all(&u32_of(f.predicate, "predicate")?.to_le_bytes())?;
            w.write_all(&u32_of(f.log_probs.len(), "token count")?.to_le_bytes())?;
            for lp in &f.log_probs {
                if lp.len() != width {
                    return Err(Error::shape("distribution width differs from the label set"));
                }
                for v in lp {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end_matches('\n') != DIST_MAGIC {
            return Err(Error::UnsupportedFormat(line.trim_end().to_string()));
        }
        let mut header = String::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::parse(0, "distribution header is not terminated"));
            }
            if line == "\n" {
                break;
            }
            header.push_str(&line);
        }
        let kv = KeyValues::parse(&header)?;
        let labels = LabelSet::from_text(kv.require("labels")?)?;
        let stored = kv.require("label_fingerprint")?;
        if stored != labels.fingerprint() {
            return Err(Error::Fingerprint {
                what: "label set".into(),
                expected: stored.into(),
                found: labels.fingerprint(),
            });
        }
        let n: usize = kv.parsed("frames")?;
        let width = labels.len();
        let mut word = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word) as usize)
        };
        let mut frames = Vec::with_capacity(n);
        for _ in 0..n {
            let sentence_id = read_u32(&mut r)?;
            let predicate = read_u32(&mut r)?;
            let tokens = read_u32(&mut r)?;
            let mut buf = vec![0u8; tokens * width * 4];
            r.read_exact(&mut buf)?;
            let values: Vec<f32> = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            frames.push(FrameDistribution {
                sentence_id,
                predicate,
                log_probs: values.chunks(width.max(1)).map(<[f32]>::to_vec).collect(),
            });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::invalid("trailing bytes after the last frame"));
        }
        Ok(DistributionFile {
            labels,
            member_fingerprint: kv.require("member_fingerprint")?.to_string(),
            rho: kv.require("rho")?.to_string(),
            frames,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}

/// Checks that dump files can be ensembled: same label set (by
/// fingerprint) and same training recipe.
pub fn check_members(files: &[DistributionFile]) -> Result<()> {
    let first = files.first().ok_or_else(|| Error::invalid("no distribution files given"))?;
    for f in &files[1..] {
        if f.labels.fingerprint() != first.labels.fingerprint() {
            return Err(Error::Fingerprint {
                what: "label set".into(),
                expected: first.labels.fingerprint(),
                found: f.labels.fingerprint(),
            });
        }
        if f.member_fingerprint != first.member_fingerprint {
            return Err(Error::Fingerprint {
                what: "training configuration".into(),
                expected: first.member_fingerprint.clone(),
                found: f.member_fingerprint.clone(),
            });
        }
    }
    Ok(())
}

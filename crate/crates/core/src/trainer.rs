//! Epoch loop with dev-driven learning-rate halving and early stopping,
//! resumable training state, and the data-size / depth experiment drivers.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::evaluator::score_corpus;
use crate::model::{apply_sgd, Gradients, Instance, Labeler, ModelConfig, ModelParams};
use crate::nnet::{clip_gradients, Container};
use crate::textio::KeyValues;

pub const STATE_MAGIC: &str = "SRL-TRAIN-STATE 1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Epochs without dev improvement before the learning rate is halved.
    pub lr_halving_patience: usize,
    /// Epochs without dev improvement before training stops.
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1.0,
            lr_halving_patience: 3,
            early_stop_patience: 10,
            max_epochs: 100,
            clip_norm: 5.0,
            seed: 1,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config("initial_lr must be positive".into()));
        }
        if self.lr_halving_patience == 0 || self.early_stop_patience == 0 || self.eval_every == 0 {
            return Err(Error::Config("patience values and eval_every must be at least 1".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn to_header(&self, kv: &mut KeyValues) {
        kv.push("train.initial_lr", self.initial_lr);
        kv.push("train.lr_halving_patience", self.lr_halving_patience);
        kv.push("train.early_stop_patience", self.early_stop_patience);
        kv.push("train.max_epochs", self.max_epochs);
        kv.push("train.clip_norm", self.clip_norm);
        kv.push("train.seed", self.seed);
        kv.push("train.eval_every", self.eval_every);
    }

    pub fn from_header(kv: &KeyValues) -> Result<Self> {
        Ok(TrainConfig {
            initial_lr: kv.parsed("train.initial_lr")?,
            lr_halving_patience: kv.parsed("train.lr_halving_patience")?,
            early_stop_patience: kv.parsed("train.early_stop_patience")?,
            max_epochs: kv.parsed("train.max_epochs")?,
            clip_norm: kv.parsed("train.clip_norm")?,
            seed: kv.parsed("train.seed")?,
            eval_every: kv.parsed("train.eval_every")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean summed-NLL per frame.
    pub train_loss: f64,
    /// `None` on epochs without a dev evaluation.
    pub dev_f1: Option<f64>,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub halved: bool,
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_dev_f1: Option<f64>,
}

impl TrainLog {
    /// Deterministic table: everything except wall-clock time.
    pub fn to_table(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tdev_f1\tlr\thalved\n");
        for r in &self.records {
            let f1 = r.dev_f1.map(|v| format!("{:.4}", v)).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{}\t{:.6}\t{}\t{}\t{}", r.epoch, r.train_loss, f1, r.lr, r.halved as u8);
        }
        out
    }

    pub fn timing_table(&self) -> String {
        let mut out = String::from("epoch\twall_secs\n");
        for r in &self.records {
            let _ = writeln!(out, "{}\t{:.3}", r.epoch, r.wall_secs);
        }
        out
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("epochs", self.records.len());
        if let (Some(e), Some(f)) = (self.best_epoch, self.best_dev_f1) {
            kv.push("best_epoch", e);
            kv.push("best_dev_f1", f);
        }
        for r in &self.records {
            kv.push(
                "epoch",
                format!(
                    "{} {} {} {} {} {}",
                    r.epoch,
                    r.train_loss,
                    r.dev_f1.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                    r.lr,
                    r.halved as u8,
                    r.wall_secs
                ),
            );
        }
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut log = TrainLog::default();
        for line in kv.get_all("epoch") {
            let f: Vec<&str> = line.split(' ').collect();
            let bad = || Error::invalid(format!("malformed epoch record `{}`", line));
            if f.len() != 6 {
                return Err(bad());
            }
            log.records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                dev_f1: if f[2] == "-" { None } else { Some(f[2].parse().map_err(|_| bad())?) },
                lr: f[3].parse().map_err(|_| bad())?,
                halved: f[4] == "1",
                wall_secs: f[5].parse().map_err(|_| bad())?,
            });
        }
        if kv.get("best_epoch").is_some() {
            log.best_epoch = Some(kv.parsed("best_epoch")?);
            log.best_dev_f1 = Some(kv.parsed("best_dev_f1")?);
        }
        Ok(log)
    }
}

/// A training run that can be stepped epoch by epoch, saved and resumed.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    /// Current parameters (with vocabulary and labels).
    pub model: Labeler,
    best: ModelParams<f32>,
    log: TrainLog,
    lr: f64,
    stale_lr: usize,
    stale_stop: usize,
    stopped: bool,
    improved: bool,
}

impl Trainer {
    pub fn new(model: Labeler, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            best: model.params.clone(),
            lr: config.initial_lr,
            config,
            model,
            log: TrainLog::default(),
            stale_lr: 0,
            stale_stop: 0,
            stopped: false,
            improved: false,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.log.records.len()
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    /// True once early stopping fired or `max_epochs` epochs ran.
    pub fn finished(&self) -> bool {
        self.stopped || self.epochs_done() >= self.config.max_epochs
    }

    /// Whether the last epoch set a new best dev score.
    pub fn improved_last(&self) -> bool {
        self.improved
    }

    /// The best-scoring parameters so far, bundled as a labeler.
    pub fn best_model(&self) -> Labeler {
        Labeler {
            params: self.best.clone(),
            ..self.model.clone()
        }
    }

    /// Runs one epoch over `train` and evaluates on `dev` when due.
    pub fn run_epoch(&mut self, train: &[Instance], dev: &[Sentence]) -> Result<&EpochRecord> {
        if train.is_empty() {
            return Err(Error::invalid("training set has no frames"));
        }
        let start = Instant::now();
        let epoch = self.epochs_done() + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let epoch_lr = self.lr;
        let lr = epoch_lr as f32;
        let clip = self.config.clip_norm as f32;
        let mut grads = Gradients::for_params(&self.model.params);
        let mut total = 0.0f64;
        for &i in &order {
            grads.clear();
            let loss = self.model.params.loss_and_grad(&train[i], &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("loss is {}", loss),
                });
            }
            total += loss as f64;
            clip_gradients(&mut grads.slices_mut(), clip).map_err(|e| Error::Divergence {
                epoch,
                message: e.to_string(),
            })?;
            apply_sgd(&mut self.model.params, &grads, lr);
        }
        if !self.model.params.all_finite() {
            return Err(Error::Divergence {
                epoch,
                message: "parameters became non-finite".into(),
            });
        }
        let mut dev_f1 = None;
        let mut halved = false;
        self.improved = false;
        self.stale_lr += 1;
        self.stale_stop += 1;
        if epoch.is_multiple_of(self.config.eval_every) {
            let f1 = score_corpus(dev, &self.model.annotate(dev)?)?.f1;
            dev_f1 = Some(f1);
            if self.log.best_dev_f1.is_none_or(|b| f1 > b) {
                self.log.best_dev_f1 = Some(f1);
                self.log.best_epoch = Some(epoch);
                self.best = self.model.params.clone();
                self.improved = true;
                self.stale_lr = 0;
                self.stale_stop = 0;
            } else {
                if self.stale_lr >= self.config.lr_halving_patience {
                    self.lr /= 2.0;
                    self.stale_lr = 0;
                    halved = true;
                }
                if self.stale_stop >= self.config.early_stop_patience {
                    self.stopped = true;
                }
            }
        }
        self.log.records.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            dev_f1,
            lr: epoch_lr,
            halved,
            wall_secs: start.elapsed().as_secs_f64(),
        });
        Ok(self.log.records.last().expect("just pushed"))
    }

    /// Runs epochs until finished.
    pub fn run(&mut self, train: &[Instance], dev: &[Sentence]) -> Result<()> {
        while !self.finished() {
            self.run_epoch(train, dev)?;
        }
        Ok(())
    }

    /// Best parameters and the full log.
    pub fn finish(self) -> (Labeler, TrainLog) {
        let best = Labeler {
            params: self.best,
            ..self.model
        };
        (best, self.log)
    }

    pub fn to_container(&self) -> Container {
        let mut c = self.model.to_container();
        c.magic = STATE_MAGIC.into();
        self.config.to_header(&mut c.header);
        c.header.push("state.lr", self.lr);
        c.header.push("state.stale_lr", self.stale_lr);
        c.header.push("state.stale_stop", self.stale_stop);
        c.header.push("state.stopped", self.stopped);
        for (k, v) in self.log.to_key_values().entries {
            c.header.push(format!("log.{}", k), v);
        }
        for (name, a) in self.best.arrays() {
            c.records.push((format!("best.{}", name), a.clone()));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let mut current = c.clone();
        current.records.retain(|(n, _)| !n.starts_with("best."));
        let model = Labeler::from_container(&current)?;
        let mut best_c = c.clone();
        best_c.records = c
            .records
            .iter()
            .filter_map(|(n, a)| n.strip_prefix("best.").map(|s| (s.to_string(), a.clone())))
            .collect();
        let best = Labeler::from_container(&best_c)?.params;
        let mut log_kv = KeyValues::new();
        for (k, v) in &c.header.entries {
            if let Some(k) = k.strip_prefix("log.") {
                log_kv.push(k, v);
            }
        }
        Ok(Trainer {
            config: TrainConfig::from_header(&c.header)?,
            model,
            best,
            log: TrainLog::from_key_values(&log_kv)?,
            lr: c.header.parsed("state.lr")?,
            stale_lr: c.header.parsed("state.stale_lr")?,
            stale_stop: c.header.parsed("state.stale_stop")?,
            stopped: c.header.parsed("state.stopped")?,
            improved: false,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.to_container().write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read_from(BufReader::new(File::open(path)?), STATE_MAGIC)?)
    }
}

/// Builds a fresh model on `train` and trains it; returns the best-dev
/// checkpoint and the log.
pub fn train(
    model_config: &ModelConfig,
    train: &[Sentence],
    dev: &[Sentence],
    config: &TrainConfig,
) -> Result<(Labeler, TrainLog)> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let model = Labeler::new(model_config.clone(), train)?;
    train_model(model, train, dev, config)
}

/// Trains an already initialized model.
pub fn train_model(model: Labeler, train: &[Sentence], dev: &[Sentence], config: &TrainConfig) -> Result<(Labeler, TrainLog)> {
    let instances = model.instances(train)?;
    let mut t = Trainer::new(model, config.clone())?;
    if config.max_epochs > 0 && instances.is_empty() {
        return Err(Error::invalid("training set has no predicate frames"));
    }
    t.run(&instances, dev)?;
    Ok(t.finish())
}

/// Trains fresh models on the first `k·chunk_size` training sentences for
/// `k = 1..⌈N/chunk_size⌉` (model selection on `dev`) and scores each on
/// `eval`. Returns `(n_sentences, eval F1)` per point.
pub fn learning_curve(
    model_config: &ModelConfig,
    train: &[Sentence],
    chunk_size: usize,
    dev: &[Sentence],
    eval: &[Sentence],
    config: &TrainConfig,
) -> Result<Vec<(usize, f64)>> {
    if chunk_size == 0 {
        return Err(Error::Config("chunk_size must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let sizes: Vec<usize> = (1..=train.len().div_ceil(chunk_size))
        .map(|k| (k * chunk_size).min(train.len()))
        .collect();
    sizes
        .par_iter()
        .map(|&n| {
            let (model, _) = self::train(model_config, &train[..n], dev, config)?;
            Ok((n, score_corpus(eval, &model.annotate(eval)?)?.f1))
        })
        .collect()
}

/// Trains one model per labeler depth and scores each on `eval`.
pub fn layer_sweep(
    model_config: &ModelConfig,
    layers: &[usize],
    train: &[Sentence],
    dev: &[Sentence],
    eval: &[Sentence],
    config: &TrainConfig,
) -> Result<Vec<(usize, f64)>> {
    layers
        .par_iter()
        .map(|&l| {
            let mc = ModelConfig {
                num_layers: l,
                ..model_config.clone()
            };
            let (model, _) = self::train(&mc, train, dev, config)?;
            Ok((l, score_corpus(eval, &model.annotate(eval)?)?.f1))
        })
        .collect()
}

/// Least-squares fit of `y = a·ln(x) + b`; returns `(a, b)`.
pub fn fit_log_curve(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid("need at least two points to fit a curve"));
    }
    if points.iter().any(|&(x, _)| x.is_nan() || x <= 0.0) {
        return Err(Error::invalid("curve x values must be positive"));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|&(x, _)| x.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = points.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all x values are equal"));
    }
    let sxy: f64 = lx.iter().zip(points).map(|(v, &(_, y))| (v - mx) * (y - my)).sum();
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    use super::*;
    use crate::corpus::{generate_synthetic, SynthSpec};
    use crate::subword::Rho;

    fn toy() -> (ModelConfig, Vec<Sentence>) {
        let spec = SynthSpec {
            train_sentences: 12,
            dev_sentences: 0,
            test_sentences: 0,
            noun_stems: 8,
            verb_stems: 3,
            ..SynthSpec::default()
        };
        let mc = ModelConfig {
            rho: Rho::Char,
            embedding_size: 8,
            hidden_size: 8,
            ..ModelConfig::default()
        };
        (mc, generate_synthetic(&spec, 2).unwrap().train)
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (mc, data) = toy();
        let tc = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (m, log) = train(&mc, &data, &data, &tc).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(m.params, Labeler::new(mc, &data).unwrap().params);
    }

    #[test]
    fn deterministic_and_best_epoch_returned() {
        let (mc, data) = toy();
        let tc = TrainConfig {
            max_epochs: 6,
            ..TrainConfig::default()
        };
        let (m1, log1) = train(&mc, &data, &data, &tc).unwrap();
        let (m2, log2) = train(&mc, &data, &data, &tc).unwrap();
        assert_eq!(log1.to_table(), log2.to_table());
        assert_eq!(m1.params, m2.params);
        let best = log1.records.iter().filter_map(|r| r.dev_f1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(log1.best_dev_f1, Some(best));
        let f1 = score_corpus(&data, &m1.annotate(&data).unwrap()).unwrap().f1;
        assert_eq!(f1, best);
    }

    #[test]
    fn resume_reproduces_trajectory() {
        let (mc, data) = toy();
        let tc = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let model = Labeler::new(mc, &data).unwrap();
        let inst = model.instances(&data).unwrap();
        let mut full = Trainer::new(model.clone(), tc.clone()).unwrap();
        full.run(&inst, &data).unwrap();

        let mut part = Trainer::new(model, tc).unwrap();
        part.run_epoch(&inst, &data).unwrap();
        part.run_epoch(&inst, &data).unwrap();
        let bytes = part.to_container().to_bytes();
        let mut resumed = Trainer::from_container(&Container::from_bytes(&bytes, STATE_MAGIC).unwrap()).unwrap();
        resumed.run(&inst, &data).unwrap();
        assert_eq!(resumed.log().to_table(), full.log().to_table());
        assert_eq!(resumed.finish().0.params, full.finish().0.params);
    }

    #[test]
    fn lr_halves_and_stops_on_plateau() {
        // lr 0 can never improve after the first evaluation
        let (mc, data) = toy();
        let tc = TrainConfig {
            initial_lr: 1e-30,
            lr_halving_patience: 2,
            early_stop_patience: 5,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let (_, log) = train(&mc, &data, &data, &tc).unwrap();
        assert_eq!(log.records.len(), 6);
        let halvings: Vec<usize> = log.records.iter().filter(|r| r.halved).map(|r| r.epoch).collect();
        assert_eq!(halvings, vec![3, 5]);
        assert!(log.records.windows(2).all(|w| w[1].lr <= w[0].lr && w[1].lr > 0.0));
    }

    #[test]
    fn log_key_value_round_trip() {
        let (mc, data) = toy();
        let tc = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        };
        let (_, log) = train(&mc, &data, &data, &tc).unwrap();
        assert_eq!(TrainLog::from_key_values(&log.to_key_values()).unwrap(), log);
    }

    #[test]
    fn curve_points() {
        let (mc, data) = toy();
        let tc = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let pts = learning_curve(&mc, &data, 5, &data, &data, &tc).unwrap();
        assert_eq!(pts.iter().map(|p| p.0).collect::<Vec<_>>(), vec![5, 10, 12]);
        assert_eq!(learning_curve(&mc, &data, 100, &data, &data, &tc).unwrap().len(), 1);
        assert!(learning_curve(&mc, &data, 0, &data, &data, &tc).is_err());
    }

    #[test]
    fn log_fit() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 5.0, 10.0].iter().map(|&x: &f64| (x, 3.0 * x.ln() + 1.0)).collect();
        let (a, b) = fit_log_curve(&pts).unwrap();
        assert_abs_diff_eq!(a, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-9);
        let (a, b) = fit_log_curve(&[(2.0, 5.0), (4.0, 7.0)]).unwrap();
        assert_abs_diff_eq!(a * 2f64.ln() + b, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a * 4f64.ln() + b, 7.0, epsilon = 1e-9);
        assert!(fit_log_curve(&[(3.0, 1.0), (3.0, 2.0)]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let noisy: Vec<(f64, f64)> = (1..=40)
            .map(|i| {
                let x = 100.0 * i as f64;
                (x, 8.0 * x.ln() + 2.0 + noise.sample(&mut rng))
            })
            .collect();
        let (a, _) = fit_log_curve(&noisy).unwrap();
        assert!((a - 8.0).abs() <= 0.8, "a = {}", a);
    }
}

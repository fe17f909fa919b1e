//! A trained or trainable model bundled with its vocabulary and label set.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;

use super::params::{param_shapes, Instance, ModelParams};
use super::ModelConfig;
use crate::corpus::{build_label_set, extract_frames, LabelSet, Sentence, NONROLE};
use crate::error::{Error, Result};
use crate::nnet::ops::argmax;
use crate::nnet::Container;
use crate::subword::{build_vocab, Segmenter, Vocabulary};

pub const MODEL_MAGIC: &str = "SRL-MODEL 1";

/// Per-token label log-probabilities for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDistribution {
    pub sentence_id: usize,
    pub predicate: usize,
    pub log_probs: Vec<Vec<f32>>,
}

impl FrameDistribution {
    pub fn predictions(&self) -> Vec<usize> {
        self.log_probs.iter().map(|lp| argmax(lp)).collect()
    }
}

/// Writes argmax labels of `dists` (in frame order) into copies of
/// `sentences`.
pub fn apply_predictions(
    sentences: &[Sentence],
    dists: &[FrameDistribution],
    labels: &LabelSet,
) -> Result<Vec<Sentence>> {
    let mut roles: Vec<Vec<Vec<String>>> = sentences
        .iter()
        .map(|s| vec![vec![NONROLE.to_string(); s.len()]; s.predicates().len()])
        .collect();
    let mut it = dists.iter();
    for (sid, s) in sentences.iter().enumerate() {
        for (col, &p) in s.predicates().iter().enumerate() {
            let d = it
                .next()
                .ok_or_else(|| Error::invalid("fewer distributions than frames"))?;
            if d.sentence_id != sid || d.predicate != p || d.log_probs.len() != s.len() {
                return Err(Error::invalid(format!(
                    "distribution for sentence {} predicate {} does not match frame ({}, {})",
                    d.sentence_id, d.predicate, sid, p
                )));
            }
            for (t, id) in d.predictions().into_iter().enumerate() {
                roles[sid][col][t] = labels.label(id).to_string();
            }
        }
    }
    if it.next().is_some() {
        return Err(Error::invalid("more distributions than frames"));
    }
    sentences.iter().zip(&roles).map(|(s, r)| s.with_roles(r)).collect()
}

#[derive(Clone, Debug)]
pub struct Labeler {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub labels: LabelSet,
    pub params: ModelParams<f32>,
}

impl Labeler {
    /// Builds vocabulary and label set from `train` and initializes
    /// parameters from the config seed.
    pub fn new(config: ModelConfig, train: &[Sentence]) -> Result<Self> {
        config.validate()?;
        let segmenter = Segmenter::new(config.rho, config.column_mode);
        let vocab = build_vocab(train, &segmenter, config.min_freq)?;
        let labels = build_label_set(&extract_frames(train), 0)?.labels;
        Self::from_parts(config, vocab, labels)
    }

    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, labels: LabelSet) -> Result<Self> {
        let params = ModelParams::init(&config, vocab.len(), labels.len())?;
        Ok(Labeler {
            config,
            vocab,
            labels,
            params,
        })
    }

    pub fn segmenter(&self) -> Segmenter {
        Segmenter::new(self.config.rho, self.config.column_mode)
    }

    pub fn encode_sentence(&self, s: &Sentence) -> Result<Vec<Vec<usize>>> {
        let seg = self.segmenter();
        s.tokens()
            .iter()
            .map(|t| Ok(seg.encode(t, &self.vocab)?.unit_ids))
            .collect()
    }

    /// Training instances, one per frame. Every gold label must be known.
    pub fn instances(&self, sentences: &[Sentence]) -> Result<Vec<Instance>> {
        let mut out = Vec::new();
        for s in sentences {
            if s.predicates().is_empty() {
                continue;
            }
            let words = self.encode_sentence(s)?;
            for (col, &p) in s.predicates().iter().enumerate() {
                let gold = s
                    .tokens()
                    .iter()
                    .map(|t| {
                        let l = &t.apreds[col];
                        self.labels
                            .id(l)
                            .ok_or_else(|| Error::invalid(format!("label `{}` is not in the model's label set", l)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push(Instance {
                    words: words.clone(),
                    predicate: p,
                    gold,
                });
            }
        }
        Ok(out)
    }

    /// Label distributions for every frame, in frame order. Frames are
    /// independent and run in parallel.
    pub fn frame_distributions(&self, sentences: &[Sentence]) -> Result<Vec<FrameDistribution>> {
        let jobs: Vec<(usize, usize)> = sentences
            .iter()
            .enumerate()
            .flat_map(|(sid, s)| s.predicates().iter().map(move |&p| (sid, p)))
            .collect();
        let encoded: Vec<Option<Vec<Vec<usize>>>> = sentences
            .par_iter()
            .map(|s| {
                if s.predicates().is_empty() {
                    Ok(None)
                } else {
                    self.encode_sentence(s).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        jobs.par_iter()
            .map(|&(sid, p)| {
                let words = encoded[sid].as_ref().expect("sentence with predicates is encoded");
                Ok(FrameDistribution {
                    sentence_id: sid,
                    predicate: p,
                    log_probs: self.params.label_distributions(words, p)?,
                })
            })
            .collect()
    }

    /// Copies of `sentences` with predicted role columns.
    pub fn annotate(&self, sentences: &[Sentence]) -> Result<Vec<Sentence>> {
        apply_predictions(sentences, &self.frame_distributions(sentences)?, &self.labels)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(MODEL_MAGIC);
        self.config.to_header(&mut c.header);
        c.header.push("vocab", self.vocab.to_text());
        c.header.push("vocab_fingerprint", self.vocab.fingerprint());
        c.header.push("labels", self.labels.to_text());
        c.header.push("label_fingerprint", self.labels.fingerprint());
        c.records = self
            .params
            .arrays()
            .into_iter()
            .map(|(n, a)| (n, a.clone()))
            .collect();
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config = ModelConfig::from_header(&c.header)?;
        let vocab = Vocabulary::from_text(c.header.require("vocab")?)?;
        check_fingerprint("vocabulary", c.header.require("vocab_fingerprint")?, &vocab.fingerprint())?;
        let labels = LabelSet::from_text(c.header.require("labels")?)?;
        check_fingerprint("label set", c.header.require("label_fingerprint")?, &labels.fingerprint())?;
        let mut params = ModelParams::<f32>::zeros(&config, vocab.len(), labels.len());
        let shapes = param_shapes(&config, vocab.len(), labels.len());
        if c.records.len() != shapes.len() {
            return Err(Error::shape(format!(
                "checkpoint has {} parameter records, config implies {}",
                c.records.len(),
                shapes.len()
            )));
        }
        for ((name, shape), (_, slot)) in shapes.iter().zip(params.arrays_mut()) {
            let rec = c.record(name)?;
            if rec.shape() != shape.as_slice() {
                return Err(Error::shape(format!(
                    "parameter `{}` has shape {:?}, config implies {:?}",
                    name,
                    rec.shape(),
                    shape
                )));
            }
            if !rec.all_finite() {
                return Err(Error::NonFinite(format!("parameter `{}`", name)));
            }
            *slot = rec.clone();
        }
        Ok(Labeler {
            config,
            vocab,
            labels,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.to_container().write_to(&mut w)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read_from(BufReader::new(File::open(path)?), MODEL_MAGIC)?;
        Self::from_container(&c)
    }
}

fn check_fingerprint(what: &str, expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(Error::Fingerprint {
            what: what.into(),
            expected: expected.into(),
            found: found.into(),
        });
    }
    Ok(())
}

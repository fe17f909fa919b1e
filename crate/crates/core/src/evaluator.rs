//! Token-level argument labeling scores and the relative improvement
//! metrics used to compare models.

use std::ops::AddAssign;

use rayon::prelude::*;

use crate::corpus::{Sentence, NONROLE};
use crate::error::{Error, Result};
use crate::textio::KeyValues;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.correct += o.correct;
        self.predicted += o.predicted;
        self.gold += o.gold;
    }
}

impl Counts {
    /// Counts one aligned (gold, predicted) label sequence.
    pub fn of_sequence<G: AsRef<str>, P: AsRef<str>>(gold: &[G], pred: &[P]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::shape(format!(
                "frame has {} gold labels but {} predictions",
                gold.len(),
                pred.len()
            )));
        }
        let mut c = Counts::default();
        for (g, p) in gold.iter().zip(pred) {
            let (g, p) = (g.as_ref(), p.as_ref());
            if p != NONROLE {
                c.predicted += 1;
            }
            if g != NONROLE {
                c.gold += 1;
                if g == p {
                    c.correct += 1;
                }
            }
        }
        Ok(c)
    }

    /// Same as [`Counts::of_sequence`] over label ids, `nonrole` being the
    /// nonrole id.
    pub fn of_ids(gold: &[usize], pred: &[usize], nonrole: usize) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::shape("gold and predicted id sequences differ in length"));
        }
        let mut c = Counts::default();
        for (&g, &p) in gold.iter().zip(pred) {
            c.predicted += (p != nonrole) as usize;
            if g != nonrole {
                c.gold += 1;
                c.correct += (g == p) as usize;
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Counts> for EvalReport {
    fn from(c: Counts) -> Self {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(c.correct, c.predicted);
        let recall = pct(c.correct, c.gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            correct: c.correct,
            predicted: c.predicted,
            gold: c.gold,
            precision,
            recall,
            f1,
        }
    }
}

impl EvalReport {
    pub fn counts(&self) -> Counts {
        Counts {
            correct: self.correct,
            predicted: self.predicted,
            gold: self.gold,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "correct   {}\npredicted {}\ngold      {}\nprecision {:.2}\nrecall    {:.2}\nf1        {:.2}\n",
            self.correct, self.predicted, self.gold, self.precision, self.recall, self.f1
        )
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("correct", self.correct);
        kv.push("predicted", self.predicted);
        kv.push("gold", self.gold);
        kv.push("precision", self.precision);
        kv.push("recall", self.recall);
        kv.push("f1", self.f1);
        kv
    }

    /// Rebuilds a report from its counts; the stored percentages are
    /// recomputed, not trusted.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let c = Counts {
            correct: kv.parsed("correct")?,
            predicted: kv.parsed("predicted")?,
            gold: kv.parsed("gold")?,
        };
        if c.correct > c.predicted.min(c.gold) {
            return Err(Error::invalid("report has more correct than predicted or gold labels"));
        }
        Ok(c.into())
    }
}

/// Scores aligned label sequences (one per frame).
pub fn score<G: AsRef<str> + Sync, P: AsRef<str> + Sync>(gold: &[Vec<G>], pred: &[Vec<P>]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::shape(format!(
            "{} gold frames but {} predicted frames",
            gold.len(),
            pred.len()
        )));
    }
    let parts = gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| Counts::of_sequence(g, p))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Counts::default();
    for c in parts {
        total += c;
    }
    Ok(total.into())
}

/// Scores the role columns of `predicted` against `gold`. Sentences must
/// align one-to-one with the same predicates.
pub fn score_corpus(gold: &[Sentence], predicted: &[Sentence]) -> Result<EvalReport> {
    score_corpus_counts(gold, predicted).map(EvalReport::from)
}

pub fn score_corpus_counts(gold: &[Sentence], predicted: &[Sentence]) -> Result<Counts> {
    if gold.len() != predicted.len() {
        return Err(Error::shape(format!(
            "{} gold sentences but {} predicted sentences",
            gold.len(),
            predicted.len()
        )));
    }
    let mut total = Counts::default();
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() || g.predicates() != p.predicates() {
            return Err(Error::shape(format!(
                "sentence {} differs in length or predicates between gold and prediction",
                i + 1
            )));
        }
        for col in 0..g.predicates().len() {
            let gl: Vec<&str> = g.tokens().iter().map(|t| t.apreds[col].as_str()).collect();
            let pl: Vec<&str> = p.tokens().iter().map(|t| t.apreds[col].as_str()).collect();
            total += Counts::of_sequence(&gl, &pl)?;
        }
    }
    Ok(total)
}

fn relative_gain(new: f64, base: f64, what: &str) -> Result<f64> {
    if base == 0.0 {
        return Err(Error::invalid(format!("{} baseline score is zero", what)));
    }
    Ok(100.0 * (new - base) / base)
}

/// Improvement of a subword model over the word model, in percent.
pub fn iow(subword_f1: f64, word_f1: f64) -> Result<f64> {
    relative_gain(subword_f1, word_f1, "word")
}

/// Improvement of the morph model over the best character model, in percent.
pub fn ioc(morph_f1: f64, best_char_f1: f64) -> Result<f64> {
    relative_gain(morph_f1, best_char_f1, "character")
}

/// Improvement of the best ensemble over the best member, in percent.
pub fn iob(ensemble_f1s: &[f64], member_f1s: &[f64]) -> Result<f64> {
    let best = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if member_f1s.is_empty() || ensemble_f1s.is_empty() {
        return Err(Error::invalid("iob needs at least one ensemble and one member score"));
    }
    relative_gain(best(ensemble_f1s), best(member_f1s), "member")
}

//! Targeted scores over token buckets (ambiguity, derivation, distance,
//! feature count), the ambiguity-based complexity proxy and plot tables.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::str::FromStr;

use crate::corpus::{extract_frames, Frame, Sentence};
use crate::error::{Error, Result};
use crate::evaluator::{Counts, EvalReport};
use crate::trainer::TrainLog;

/// Scores only the token positions `filter(frame, position)` accepts.
pub fn targeted_f1<F>(gold: &[Sentence], predicted: &[Sentence], filter: F) -> Result<EvalReport>
where
    F: Fn(&Frame<'_>, usize) -> bool,
{
    targeted_counts(gold, predicted, filter).map(EvalReport::from)
}

fn targeted_counts<F>(gold: &[Sentence], predicted: &[Sentence], filter: F) -> Result<Counts>
where
    F: Fn(&Frame<'_>, usize) -> bool,
{
    if gold.len() != predicted.len() {
        return Err(Error::shape(format!(
            "{} gold sentences but {} predicted sentences",
            gold.len(),
            predicted.len()
        )));
    }
    let mut total = Counts::default();
    for frame in extract_frames(gold) {
        let pred = &predicted[frame.sentence_id];
        if pred.len() != frame.len() || pred.predicates() != frame.sentence.predicates() {
            return Err(Error::shape(format!(
                "sentence {} differs in length or predicates between gold and prediction",
                frame.sentence_id + 1
            )));
        }
        let (g, p): (Vec<&str>, Vec<&str>) = (0..frame.len())
            .filter(|&t| filter(&frame, t))
            .map(|t| (frame.gold[t], pred.tokens()[t].apreds[frame.column].as_str()))
            .unzip();
        total += Counts::of_sequence(&g, &p)?;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bucket {
    pub key: String,
    /// Gold arguments inside the bucket.
    pub support: usize,
    /// `None` when the bucket is empty.
    pub report: Option<EvalReport>,
}

/// Declared buckets plus the explicitly excluded populations.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketReport {
    pub name: String,
    pub buckets: Vec<Bucket>,
    pub excluded: Vec<Bucket>,
}

impl BucketReport {
    /// Gold arguments over declared and excluded buckets.
    pub fn population(&self) -> usize {
        self.buckets.iter().chain(&self.excluded).map(|b| b.support).sum()
    }

    pub fn bucket(&self, key: &str) -> Option<&Bucket> {
        self.buckets.iter().chain(&self.excluded).find(|b| b.key == key)
    }
}

/// Scores a partition: `classify` maps each (frame, position) to a key.
/// Keys listed in `declared` form the buckets (in that order), anything
/// else is reported as excluded, sorted by key.
fn partition<C>(name: &str, gold: &[Sentence], predicted: &[Sentence], declared: &[&str], classify: C) -> Result<BucketReport>
where
    C: Fn(&Frame<'_>, usize) -> String,
{
    let mut counts: HashMap<String, Counts> = HashMap::new();
    for d in declared {
        counts.insert(d.to_string(), Counts::default());
    }
    for frame in extract_frames(gold) {
        // group positions by key, then count each group
        let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
        for t in 0..frame.len() {
            groups.entry(classify(&frame, t)).or_default().push(t);
        }
        let pred = predicted
            .get(frame.sentence_id)
            .ok_or_else(|| Error::shape("fewer predicted sentences than gold sentences"))?;
        if pred.len() != frame.len() || pred.predicates() != frame.sentence.predicates() {
            return Err(Error::shape(format!(
                "sentence {} differs in length or predicates between gold and prediction",
                frame.sentence_id + 1
            )));
        }
        for (key, positions) in groups {
            let g: Vec<&str> = positions.iter().map(|&t| frame.gold[t]).collect();
            let p: Vec<&str> = positions
                .iter()
                .map(|&t| pred.tokens()[t].apreds[frame.column].as_str())
                .collect();
            *counts.entry(key).or_default() += Counts::of_sequence(&g, &p)?;
        }
    }
    if gold.len() != predicted.len() {
        return Err(Error::shape("gold and predicted corpora differ in sentence count"));
    }
    let bucket = |key: &str, c: Counts| Bucket {
        key: key.to_string(),
        support: c.gold,
        report: (c.gold > 0 || c.predicted > 0).then(|| c.into()),
    };
    let buckets = declared.iter().map(|d| bucket(d, counts[*d])).collect();
    let mut rest: Vec<(&String, &Counts)> = counts.iter().filter(|(k, _)| !declared.contains(&k.as_str())).collect();
    rest.sort_by(|a, b| a.0.cmp(b.0));
    Ok(BucketReport {
        name: name.to_string(),
        buckets,
        excluded: rest.into_iter().map(|(k, c)| bucket(k, *c)).collect(),
    })
}

fn feature_sets(train: &[Sentence]) -> HashMap<String, HashSet<&Vec<String>>> {
    let mut sets: HashMap<String, HashSet<&Vec<String>>> = HashMap::new();
    for t in train.iter().flat_map(|s| s.tokens()) {
        sets.entry(t.form.to_lowercase()).or_default().insert(&t.feats);
    }
    sets
}

/// Lowercased training forms observed with two or more feature sets.
pub fn ambiguous_forms(train: &[Sentence]) -> BTreeSet<String> {
    feature_sets(train)
        .into_iter()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(f, _)| f)
        .collect()
}

/// `ambiguous` / `non-ambiguous` by training feature sets. Forms absent
/// from training count as non-ambiguous unless `exclude_unseen`, in which
/// case they are reported as the excluded `unseen` population.
pub fn ambiguity_buckets(train: &[Sentence], gold: &[Sentence], predicted: &[Sentence], exclude_unseen: bool) -> Result<BucketReport> {
    let sets = feature_sets(train);
    partition("ambiguity", gold, predicted, &["ambiguous", "non-ambiguous"], |f, t| {
        match sets.get(&f.sentence.tokens()[t].form.to_lowercase()) {
            Some(s) if s.len() >= 2 => "ambiguous".into(),
            None if exclude_unseen => "unseen".into(),
            _ => "non-ambiguous".into(),
        }
    })
}

/// Sentence-level split by presence of `marker` in any token's features.
pub fn derivation_buckets(gold: &[Sentence], predicted: &[Sentence], marker: &str) -> Result<BucketReport> {
    partition("derivation", gold, predicted, &["derivational", "simple"], |f, _| {
        let derived = f.sentence.tokens().iter().any(|t| t.feats.iter().any(|x| x == marker));
        if derived { "derivational" } else { "simple" }.into()
    })
}

/// Inclusive integer range used as a bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bin {
    pub lo: usize,
    pub hi: usize,
}

impl Bin {
    pub fn key(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }

    pub fn contains(&self, v: usize) -> bool {
        self.lo <= v && v <= self.hi
    }
}

impl FromStr for Bin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bin `{}` is not of the form lo-hi", s));
        let (lo, hi) = s.split_once('-').ok_or_else(bad)?;
        let bin = Bin {
            lo: lo.trim().parse().map_err(|_| bad())?,
            hi: hi.trim().parse().map_err(|_| bad())?,
        };
        if bin.lo > bin.hi {
            return Err(bad());
        }
        Ok(bin)
    }
}

pub fn parse_bins(spec: &str) -> Result<Vec<Bin>> {
    let bins: Vec<Bin> = spec.split(',').map(str::parse).collect::<Result<_>>()?;
    for w in bins.windows(2) {
        if w[1].lo <= w[0].hi {
            return Err(Error::Config("bins must be increasing and disjoint".into()));
        }
    }
    Ok(bins)
}

pub const DISTANCE_BINS: [Bin; 4] = [
    Bin { lo: 0, hi: 4 },
    Bin { lo: 5, hi: 9 },
    Bin { lo: 10, hi: 14 },
    Bin { lo: 15, hi: 19 },
];

pub const FEATURE_BINS: [Bin; 3] = [Bin { lo: 1, hi: 2 }, Bin { lo: 3, hi: 4 }, Bin { lo: 5, hi: 6 }];

fn binned(bins: &[Bin], v: usize) -> String {
    match bins.iter().find(|b| b.contains(v)) {
        Some(b) => b.key(),
        None if bins.first().is_some_and(|b| v < b.lo) => format!("<{}", bins[0].lo),
        None => match bins.iter().find(|b| v < b.lo) {
            Some(_) => format!("gap:{}", v),
            None => format!(">{}", bins.last().map_or(0, |b| b.hi)),
        },
    }
}

/// Tokens strictly between argument and predicate: `|a − p| − 1`. The
/// predicate token itself is excluded as `self`.
pub fn distance_bins(gold: &[Sentence], predicted: &[Sentence], bins: &[Bin]) -> Result<BucketReport> {
    let keys: Vec<String> = bins.iter().map(Bin::key).collect();
    let declared: Vec<&str> = keys.iter().map(String::as_str).collect();
    partition("distance", gold, predicted, &declared, |f, t| {
        if t == f.predicate {
            "self".into()
        } else {
            binned(bins, t.abs_diff(f.predicate) - 1)
        }
    })
}

/// Buckets by the number of gold morphological features; featureless
/// tokens are excluded as `0`.
pub fn feature_count_bins(gold: &[Sentence], predicted: &[Sentence], bins: &[Bin]) -> Result<BucketReport> {
    let keys: Vec<String> = bins.iter().map(Bin::key).collect();
    let declared: Vec<&str> = keys.iter().map(String::as_str).collect();
    partition("features", gold, predicted, &declared, |f, t| {
        let n = f.sentence.tokens()[t].feats.len();
        if n == 0 {
            "0".into()
        } else {
            binned(bins, n)
        }
    })
}

/// Percentage of distinct training forms seen with two or more feature sets.
pub fn complexity_proxy(train: &[Sentence]) -> Result<f64> {
    let sets = feature_sets(train);
    if sets.is_empty() {
        return Err(Error::invalid("training corpus has no tokens"));
    }
    let ambiguous = sets.values().filter(|s| s.len() >= 2).count();
    Ok(100.0 * ambiguous as f64 / sets.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotFormat {
    Tsv,
    Csv,
}

impl FromStr for PlotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(PlotFormat::Tsv),
            "csv" => Ok(PlotFormat::Csv),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

impl PlotFormat {
    fn delimiter(self) -> u8 {
        match self {
            PlotFormat::Tsv => b'\t',
            PlotFormat::Csv => b',',
        }
    }
}

/// Column-oriented table with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn fmt_f(v: Option<f64>) -> String {
    v.map(|x| format!("{:.4}", x)).unwrap_or_default()
}

impl PlotTable {
    /// One row per (model, declared bucket): `model, bucket, f1, precision,
    /// recall, support`. Empty buckets leave the score cells blank.
    pub fn from_buckets(reports: &[(&str, &BucketReport)]) -> Self {
        let mut rows = Vec::new();
        for (model, r) in reports {
            for b in &r.buckets {
                rows.push(vec![
                    model.to_string(),
                    b.key.clone(),
                    fmt_f(b.report.map(|x| x.f1)),
                    fmt_f(b.report.map(|x| x.precision)),
                    fmt_f(b.report.map(|x| x.recall)),
                    b.support.to_string(),
                ]);
            }
        }
        PlotTable {
            columns: ["model", "bucket", "f1", "precision", "recall", "support"].map(String::from).to_vec(),
            rows,
        }
    }

    pub fn from_train_log(log: &TrainLog) -> Self {
        PlotTable {
            columns: ["epoch", "train_loss", "dev_f1", "lr"].map(String::from).to_vec(),
            rows: log
                .records
                .iter()
                .map(|r| vec![r.epoch.to_string(), format!("{:.6}", r.train_loss), fmt_f(r.dev_f1), r.lr.to_string()])
                .collect(),
        }
    }

    pub fn from_curve(points: &[(usize, f64)]) -> Self {
        PlotTable {
            columns: vec!["n_sentences".into(), "f1".into()],
            rows: points.iter().map(|(n, f)| vec![n.to_string(), format!("{:.4}", f)]).collect(),
        }
    }

    pub fn emit(&self, format: PlotFormat) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(format.delimiter())
            .from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            if r.len() != self.columns.len() {
                return Err(Error::shape("plot row width differs from the header"));
            }
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn parse(text: &str, format: PlotFormat) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .delimiter(format.delimiter())
            .from_reader(text.as_bytes());
        let columns = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(String::from).collect()).map_err(csv_err))
            .collect::<Result<_>>()?;
        Ok(PlotTable { columns, rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(line, e.to_string())
}

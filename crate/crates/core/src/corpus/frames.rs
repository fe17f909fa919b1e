use std::collections::{BTreeMap, HashMap};

use super::conll::{Sentence, EMPTY};
use crate::error::{Error, Result};
use crate::textio::{escape, fingerprint, unescape};

/// The nonrole symbol. CoNLL-09 `_` role cells map to it unchanged.
pub const NONROLE: &str = EMPTY;

/// One (sentence, predicate) labeling instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<'a> {
    pub sentence: &'a Sentence,
    /// Index of the sentence in its corpus.
    pub sentence_id: usize,
    /// 0-based token position of the predicate.
    pub predicate: usize,
    /// Which APRED column (0-based) belongs to this predicate.
    pub column: usize,
    /// Gold label per token; nonrole is [`NONROLE`].
    pub gold: Vec<&'a str>,
}

impl Frame<'_> {
    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }
}

pub fn extract_frames(sentences: &[Sentence]) -> Vec<Frame<'_>> {
    let mut frames = Vec::new();
    for (sid, s) in sentences.iter().enumerate() {
        for (col, &p) in s.predicates().iter().enumerate() {
            frames.push(Frame {
                sentence: s,
                sentence_id: sid,
                predicate: p,
                column: col,
                gold: s.tokens().iter().map(|t| t.apreds[col].as_str()).collect(),
            });
        }
    }
    frames
}

/// Ordered label inventory. The nonrole symbol is always present, at index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    /// Builds a label set from an explicit ordering; `labels` must contain
    /// [`NONROLE`] exactly once, at position 0, and no duplicates.
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        if labels.first().map(String::as_str) != Some(NONROLE) {
            return Err(Error::invalid("label set must start with the nonrole symbol"));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate label `{}`", l)));
            }
        }
        Ok(LabelSet { labels, index })
    }

    pub fn nonrole_index(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.labels.join("\n"))
    }

    /// One escaped label per line, line number = index.
    pub fn to_text(&self) -> String {
        self.labels.iter().map(|l| escape(l) + "\n").collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let labels = text
            .lines()
            .enumerate()
            .map(|(i, l)| unescape(l).ok_or_else(|| Error::parse(i + 1, "bad escape sequence")))
            .collect::<Result<Vec<_>>>()?;
        Self::from_labels(labels)
    }
}

/// A label set together with the role counts it was built from.
#[derive(Clone, Debug)]
pub struct RoleInventory {
    pub labels: LabelSet,
    /// Role occurrence counts (nonrole excluded), sorted by label.
    pub counts: BTreeMap<String, usize>,
    /// Number of roles occurring more than `min_count` times; reporting only.
    pub frequent_roles: usize,
}

/// Collects every role seen in `frames`. Order: nonrole first, then
/// frequency descending, then lexicographic. `min_count` only affects
/// [`RoleInventory::frequent_roles`]; rare roles stay trainable labels.
pub fn build_label_set(frames: &[Frame<'_>], min_count: usize) -> Result<RoleInventory> {
    if frames.is_empty() {
        return Err(Error::invalid("cannot build a label set from zero frames"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for f in frames {
        for &g in &f.gold {
            if g != NONROLE {
                *counts.entry(g.to_string()).or_default() += 1;
            }
        }
    }
    let mut ordered: Vec<(&String, &usize)> = counts.iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut labels = vec![NONROLE.to_string()];
    labels.extend(ordered.iter().map(|(l, _)| (*l).clone()));
    let frequent_roles = counts.values().filter(|&&c| c > min_count).count();
    Ok(RoleInventory {
        labels: LabelSet::from_labels(labels)?,
        counts,
        frequent_roles,
    })
}

/// Replaces multiword-expression forms (parts joined by `joiner`) with the
/// initial character of each part. Abbreviations stay unique across all
/// sentences passed through the same abbreviator: a clash gets a numeric
/// suffix starting at 2.
#[derive(Clone, Debug, Default)]
pub struct MweAbbreviator {
    joiner: String,
    /// original → abbreviation
    table: BTreeMap<String, String>,
    used: HashMap<String, String>,
}

impl MweAbbreviator {
    pub fn new(joiner: impl Into<String>) -> Self {
        MweAbbreviator {
            joiner: joiner.into(),
            ..Default::default()
        }
    }

    fn abbreviate_form(&mut self, form: &str) -> Option<String> {
        if self.joiner.is_empty() || !form.contains(self.joiner.as_str()) {
            return None;
        }
        if let Some(a) = self.table.get(form) {
            return Some(a.clone());
        }
        let parts: Vec<&str> = form.split(self.joiner.as_str()).filter(|p| !p.is_empty()).collect();
        if parts.len() < 2 {
            return None;
        }
        let base: String = parts.iter().filter_map(|p| p.chars().next()).collect();
        let mut candidate = base.clone();
        let mut n = 2;
        while self.used.get(&candidate).is_some_and(|orig| orig != form) {
            candidate = format!("{}{}", base, n);
            n += 1;
        }
        self.used.insert(candidate.clone(), form.to_string());
        self.table.insert(form.to_string(), candidate.clone());
        Some(candidate)
    }

    pub fn abbreviate(&mut self, sentence: &Sentence) -> Sentence {
        let forms = sentence
            .tokens()
            .iter()
            .map(|t| self.abbreviate_form(&t.form).unwrap_or_else(|| t.form.clone()))
            .collect();
        sentence.with_forms(forms)
    }

    /// original form → abbreviation, for reversing the mapping.
    pub fn table(&self) -> &BTreeMap<String, String> {
        &self.table
    }
}

/// Single-sentence convenience wrapper around [`MweAbbreviator`].
pub fn abbreviate_mwe(sentence: &Sentence, joiner: &str) -> (Sentence, BTreeMap<String, String>) {
    let mut ab = MweAbbreviator::new(joiner);
    let s = ab.abbreviate(sentence);
    (s, ab.table)
}

//! Token segmentation functions and subword vocabularies.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::corpus::{ColumnMode, Sentence, Token};
use crate::error::{Error, Result};
use crate::textio::{escape, fingerprint, unescape};

pub const BOW: char = '<';
pub const EOW: char = '>';
/// Display name of the reserved unknown entry (id 0).
pub const UNK: &str = "<unk>";

/// Which segmentation a model composes its word vectors from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rho {
    /// Whole lowercased word; no composition.
    Word,
    Char,
    Char3,
    Morph,
}

impl Rho {
    pub const ALL: [Rho; 4] = [Rho::Word, Rho::Char, Rho::Char3, Rho::Morph];

    pub fn composes(self) -> bool {
        self != Rho::Word
    }
}

impl fmt::Display for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rho::Word => "word",
            Rho::Char => "char",
            Rho::Char3 => "char3",
            Rho::Morph => "morph",
        })
    }
}

impl FromStr for Rho {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Rho::Word),
            "char" => Ok(Rho::Char),
            "char3" => Ok(Rho::Char3),
            "morph" => Ok(Rho::Morph),
            other => Err(Error::Config(format!(
                "unknown segmentation `{}` (expected word, char, char3 or morph)",
                other
            ))),
        }
    }
}

/// Lowercases and wraps in boundary symbols: `Available` → `<available>`.
pub fn normalize(token: &str) -> Result<String> {
    if token.is_empty() {
        return Err(Error::invalid("cannot normalize an empty token"));
    }
    let mut out = String::with_capacity(token.len() + 2);
    out.push(BOW);
    out.push_str(&token.to_lowercase());
    out.push(EOW);
    Ok(out)
}

/// One unit per scalar value of an already normalized form.
pub fn rho_char(normalized: &str) -> Vec<String> {
    normalized.chars().map(String::from).collect()
}

/// Width-3 sliding windows over an already normalized form; forms shorter
/// than three scalar values come back whole.
pub fn rho_char3(normalized: &str) -> Vec<String> {
    let chars: Vec<char> = normalized.chars().collect();
    if chars.len() < 3 {
        return vec![normalized.to_string()];
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Lowercased lemma followed by the feature strings, in file order.
pub fn rho_morph(token: &Token, mode: ColumnMode) -> Vec<String> {
    let mut units = vec![token.active_lemma(mode).to_lowercase()];
    units.extend(token.active_feats(mode).iter().cloned());
    units
}

/// Segmentation plus the column set it reads lemma and features from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segmenter {
    pub rho: Rho,
    pub mode: ColumnMode,
}

impl Segmenter {
    pub fn new(rho: Rho, mode: ColumnMode) -> Self {
        Segmenter { rho, mode }
    }

    pub fn segment(&self, token: &Token) -> Result<Vec<String>> {
        match self.rho {
            Rho::Morph => {
                if token.active_lemma(self.mode).is_empty() {
                    return Err(Error::invalid(format!("token {} has no lemma", token.id)));
                }
                Ok(rho_morph(token, self.mode))
            }
            _ => self.segment_form(&token.form),
        }
    }

    /// Segments a bare surface form; morph needs a full token.
    pub fn segment_form(&self, form: &str) -> Result<Vec<String>> {
        match self.rho {
            Rho::Word => {
                if form.is_empty() {
                    return Err(Error::invalid("empty token"));
                }
                Ok(vec![form.to_lowercase()])
            }
            Rho::Char => Ok(rho_char(&normalize(form)?)),
            Rho::Char3 => Ok(rho_char3(&normalize(form)?)),
            Rho::Morph => Err(Error::invalid("morph segmentation needs lemma and features")),
        }
    }

    pub fn encode(&self, token: &Token, vocab: &Vocabulary) -> Result<SubwordSequence> {
        Ok(vocab.encode_units(self.segment(token)?))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubwordSequence {
    pub units: Vec<String>,
    pub unit_ids: Vec<usize>,
}

/// Unit inventory. Id 0 is the reserved unknown entry; the rest are
/// ordered by training frequency (descending), ties lexicographic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    units: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn unk_id(&self) -> usize {
        0
    }

    /// Builds from unit occurrences, dropping units seen fewer than
    /// `min_freq` times.
    pub fn from_units<I, S>(units: I, min_freq: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut any = false;
        for u in units {
            any = true;
            *counts.entry(u.as_ref().to_string()).or_default() += 1;
        }
        if !any {
            return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
        }
        let mut entries: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_ordered(entries.into_iter().map(|(u, _)| u)))
    }

    fn from_ordered(units: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![UNK.to_string()];
        all.extend(units);
        let index = all.iter().enumerate().skip(1).map(|(i, u)| (u.clone(), i)).collect();
        Vocabulary { units: all, index }
    }

    /// Number of entries including the unknown entry.
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.len() <= 1
    }

    pub fn encode(&self, unit: &str) -> usize {
        self.index.get(unit).copied().unwrap_or(0)
    }

    pub fn contains(&self, unit: &str) -> bool {
        self.index.contains_key(unit)
    }

    pub fn decode(&self, id: usize) -> Option<&str> {
        self.units.get(id).map(String::as_str)
    }

    pub fn encode_units(&self, units: Vec<String>) -> SubwordSequence {
        let unit_ids = units.iter().map(|u| self.encode(u)).collect();
        SubwordSequence { units, unit_ids }
    }

    /// Entries in id order, the unknown entry first.
    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.to_text())
    }

    /// One escaped unit per line; line number = id.
    pub fn to_text(&self) -> String {
        self.units.iter().map(|u| escape(u) + "\n").collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(UNK) {
            return Err(Error::parse(1, format!("vocabulary must start with `{}`", UNK)));
        }
        let mut seen = HashSet::new();
        let mut units = Vec::new();
        for (i, l) in lines.enumerate() {
            let u = unescape(l).ok_or_else(|| Error::parse(i + 2, "bad escape sequence"))?;
            if !seen.insert(u.clone()) {
                return Err(Error::parse(i + 2, format!("duplicate unit `{}`", l)));
            }
            units.push(u);
        }
        Ok(Self::from_ordered(units))
    }
}

/// Builds the vocabulary of `segmenter` units over a training corpus.
pub fn build_vocab(corpus: &[Sentence], segmenter: &Segmenter, min_freq: usize) -> Result<Vocabulary> {
    let mut units = Vec::new();
    for s in corpus {
        for t in s.tokens() {
            units.extend(segmenter.segment(t)?);
        }
    }
    Vocabulary::from_units(units, min_freq)
}

/// Percentage of eval tokens whose lowercased form never occurs in `train`.
pub fn oov_rate(train: &[Sentence], eval: &[Sentence]) -> Result<f64> {
    let known: HashSet<String> = train
        .iter()
        .flat_map(|s| s.tokens())
        .map(|t| t.form.to_lowercase())
        .collect();
    let mut total = 0usize;
    let mut unseen = 0usize;
    for t in eval.iter().flat_map(|s| s.tokens()) {
        total += 1;
        if !known.contains(&t.form.to_lowercase()) {
            unseen += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("evaluation set has no tokens"));
    }
    Ok(100.0 * unseen as f64 / total as f64)
}

/// Percentage of eval units (under `segmenter`) missing from `vocab`.
pub fn unit_oov_rate(vocab: &Vocabulary, segmenter: &Segmenter, eval: &[Sentence]) -> Result<f64> {
    let mut total = 0usize;
    let mut unseen = 0usize;
    for t in eval.iter().flat_map(|s| s.tokens()) {
        for u in segmenter.segment(t)? {
            total += 1;
            if !vocab.contains(&u) {
                unseen += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::invalid("evaluation set has no tokens"));
    }
    Ok(100.0 * unseen as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::parse_conll09;

    fn token(form: &str, lemma: &str, feats: &[&str]) -> Token {
        Token {
            id: 1,
            form: form.into(),
            lemma: lemma.into(),
            plemma: lemma.into(),
            pos: "X".into(),
            ppos: "X".into(),
            feats: feats.iter().map(|s| s.to_string()).collect(),
            pfeats: vec!["P".into()],
            head: 0,
            phead: 0,
            deprel: "X".into(),
            pdeprel: "X".into(),
            fillpred: false,
            pred: String::new(),
            apreds: vec![],
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("Available").unwrap(), "<available>");
        assert_eq!(normalize("LA").unwrap(), "<la>");
        assert_eq!(normalize("Köylüler").unwrap(), "<köylüler>");
        assert!(normalize("").is_err());
    }

    #[test]
    fn char_units() {
        let units = rho_char(&normalize("available").unwrap());
        assert_eq!(units.join(" "), "< a v a i l a b l e >");
        assert_eq!(rho_char("<a>").len(), 3);
    }

    #[test]
    fn char3_units() {
        let units = rho_char3(&normalize("available").unwrap());
        assert_eq!(units.join(" "), "<av ava vai ail ila lab abl ble le>");
        assert_eq!(rho_char3("<a>"), vec!["<a>"]);
        assert_eq!(rho_char3("ab"), vec!["ab"]);
    }

    #[test]
    fn morph_units() {
        let t = token("boyda", "Boy", &["Noun", "A3sg", "P3sg", "Loc", "DB", "Adj"]);
        assert_eq!(
            rho_morph(&t, ColumnMode::Gold),
            vec!["boy", "Noun", "A3sg", "P3sg", "Loc", "DB", "Adj"]
        );
        let t = token("el", "el", &["postype=article", "gen=f", "num=p"]);
        assert_eq!(rho_morph(&t, ColumnMode::Gold).len(), 4);
        assert_eq!(rho_morph(&token("x", "x", &[]), ColumnMode::Gold), vec!["x"]);
        assert_eq!(rho_morph(&t, ColumnMode::Predicted), vec!["el", "P"]);
    }

    #[test]
    fn vocabulary_order_and_unk() {
        let v = Vocabulary::from_units(rho_char("<ab>").into_iter().chain(rho_char("<ab>")), 1).unwrap();
        assert_eq!(v.units(), &[UNK, "<", ">", "a", "b"]);
        let v = Vocabulary::from_units(["x", "x", "y"], 2).unwrap();
        assert_eq!(v.encode("y"), v.unk_id());
        assert_eq!(v.encode("x"), 1);
        assert!(Vocabulary::from_units(Vec::<String>::new(), 1).is_err());
    }

    #[test]
    fn vocabulary_text_round_trip() {
        let v = Vocabulary::from_units(["a b", "\\", "<unk>", "ü"], 1).unwrap();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert_ne!(v.encode("<unk>"), v.unk_id());
        assert!(Vocabulary::from_text("a\n").is_err());
    }

    #[test]
    fn oov_percentages() {
        let row = |id: usize, form: &str| {
            format!("{}\t{}\t{}\t{}\tX\tX\t_\t_\t0\t0\tX\tX\t_\t_\n", id, form, form, form)
        };
        let train = parse_conll09(&(row(1, "a") + &row(2, "b") + &row(3, "c"))).unwrap();
        let eval = parse_conll09(&(row(1, "A") + &row(2, "b") + &row(3, "c") + &row(4, "d"))).unwrap();
        assert_eq!(oov_rate(&train, &train).unwrap(), 0.0);
        assert_eq!(oov_rate(&train, &eval).unwrap(), 25.0);
        assert!(oov_rate(&train, &[]).is_err());
    }

    proptest! {
        #[test]
        fn char_reassembles_normalized(s in "\\PC{1,20}") {
            let n = normalize(&s).unwrap();
            let units = rho_char(&n);
            prop_assert_eq!(units.len(), n.chars().count());
            prop_assert_eq!(units.concat(), n);
        }

        #[test]
        fn char3_windows_overlap(s in "\\PC{1,20}") {
            let n = normalize(&s).unwrap();
            let m = n.chars().count();
            let units = rho_char3(&n);
            prop_assert_eq!(units.len(), m - 2);
            for w in units.windows(2) {
                let a: Vec<char> = w[0].chars().collect();
                let b: Vec<char> = w[1].chars().collect();
                prop_assert_eq!(&a[1..], &b[..2]);
            }
        }

        #[test]
        fn segmentation_never_empty(s in "\\PC{1,12}", rho in 0usize..3) {
            let seg = Segmenter::new([Rho::Word, Rho::Char, Rho::Char3][rho], ColumnMode::Gold);
            let a = seg.segment_form(&s).unwrap();
            prop_assert!(!a.is_empty());
            prop_assert_eq!(a, seg.segment_form(&s).unwrap());
        }

        #[test]
        fn encode_decode_identity(units in proptest::collection::vec("[a-zçöü]{1,4}", 1..30)) {
            let v = Vocabulary::from_units(&units, 1).unwrap();
            for u in &units {
                prop_assert_eq!(v.decode(v.encode(u)), Some(u.as_str()));
            }
        }
    }
}

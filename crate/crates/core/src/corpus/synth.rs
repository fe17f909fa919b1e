//! Deterministic generator for a small agglutinative toy language.
//!
//! Nouns are `stem (+ derivation) + case suffix`; every case suffix carries
//! fixed features and a fixed role, so argument roles are recoverable from
//! the word's ending. A sentence is a sequence of verb-final clauses; the
//! arguments of a predicate are the role-bearing nouns of its own clause.
//!
//! The spec file is TOML; every key is optional:
//!
//! ```toml
//! train_sentences = 200      # split sizes
//! dev_sentences = 50
//! test_sentences = 50
//! noun_stems = 40            # lexicon sizes
//! verb_stems = 10
//! adverbs = 6
//! min_length = 3             # tokens per sentence
//! max_length = 9
//! min_predicates = 1
//! max_predicates = 2
//! filler_rate = 0.2          # chance a clause slot is a non-argument
//! ambiguity_rate = 0.0       # fraction of noun stems with two readings
//! derivation_rate = 0.0      # fraction of sentences with one derived noun
//! novel_stem_rate = 0.0      # fraction of test tokens given unseen stems
//! predicted_error_rate = 0.0 # fraction of tokens whose PFEAT case is wrong
//! verb_suffix = "di"
//! verb_feats = ["Verb", "Pos", "Past", "A3sg"]
//! derivation_suffix = "lik"
//! derivation_feats = ["DB", "Noun"]
//!
//! [[suffixes]]               # role "_" marks a non-argument case
//! surface = "lar"
//! feats = ["A3pl", "Nom"]
//! role = "A0"
//! ```

use std::collections::{BTreeSet, HashSet};

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conll::{Sentence, Token, EMPTY};
use super::frames::NONROLE;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuffixSpec {
    pub surface: String,
    pub feats: Vec<String>,
    pub role: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    pub noun_stems: usize,
    pub verb_stems: usize,
    pub adverbs: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub min_predicates: usize,
    pub max_predicates: usize,
    pub filler_rate: f64,
    pub ambiguity_rate: f64,
    pub derivation_rate: f64,
    pub novel_stem_rate: f64,
    pub predicted_error_rate: f64,
    pub verb_suffix: String,
    pub verb_feats: Vec<String>,
    pub derivation_suffix: String,
    pub derivation_feats: Vec<String>,
    pub suffixes: Vec<SuffixSpec>,
}

fn suffix(surface: &str, feats: &[&str], role: &str) -> SuffixSpec {
    SuffixSpec {
        surface: surface.into(),
        feats: feats.iter().map(|s| s.to_string()).collect(),
        role: role.into(),
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train_sentences: 200,
            dev_sentences: 50,
            test_sentences: 50,
            noun_stems: 40,
            verb_stems: 10,
            adverbs: 6,
            min_length: 3,
            max_length: 9,
            min_predicates: 1,
            max_predicates: 2,
            filler_rate: 0.2,
            ambiguity_rate: 0.0,
            derivation_rate: 0.0,
            novel_stem_rate: 0.0,
            predicted_error_rate: 0.0,
            verb_suffix: "di".into(),
            verb_feats: ["Verb", "Pos", "Past", "A3sg"].iter().map(|s| s.to_string()).collect(),
            derivation_suffix: "lik".into(),
            derivation_feats: vec!["DB".into(), "Noun".into()],
            suffixes: vec![
                suffix("lar", &["A3pl", "Nom"], "A0"),
                suffix("yı", &["A3sg", "Acc"], "A1"),
                suffix("ye", &["A3sg", "Dat"], "A2"),
                suffix("de", &["A3sg", "Loc"], "AM-LOC"),
                suffix("den", &["A3sg", "Abl"], "AM-DIR"),
                suffix("nin", &["A3sg", "Gen"], NONROLE),
            ],
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("filler_rate", self.filler_rate),
            ("ambiguity_rate", self.ambiguity_rate),
            ("derivation_rate", self.derivation_rate),
            ("novel_stem_rate", self.novel_stem_rate),
            ("predicted_error_rate", self.predicted_error_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{} must lie in [0, 1], got {}", name, r)));
            }
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return Err(Error::Config("need 1 <= min_length <= max_length".into()));
        }
        if self.min_predicates > self.max_predicates {
            return Err(Error::Config("min_predicates exceeds max_predicates".into()));
        }
        if 2 * self.max_predicates > self.max_length {
            return Err(Error::Config(
                "max_length must leave room for one argument per predicate".into(),
            ));
        }
        if self.noun_stems == 0 {
            return Err(Error::Config("noun_stems must be at least 1".into()));
        }
        if self.max_predicates > 0 && self.verb_stems == 0 {
            return Err(Error::Config("predicates need at least one verb stem".into()));
        }
        if self.suffixes.is_empty() {
            return Err(Error::Config("suffix inventory is empty".into()));
        }
        if self.max_predicates > 0 && self.role_suffixes().next().is_none() {
            return Err(Error::Config("no suffix carries a semantic role".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.suffixes {
            if s.surface.is_empty() || !seen.insert(&s.surface) {
                return Err(Error::Config(format!("suffix `{}` is empty or repeated", s.surface)));
            }
        }
        Ok(())
    }

    fn role_suffixes(&self) -> impl Iterator<Item = &SuffixSpec> {
        self.suffixes.iter().filter(|s| s.role != NONROLE)
    }

    /// The semantic roles the generator can emit, sorted.
    pub fn roles(&self) -> BTreeSet<String> {
        self.role_suffixes().map(|s| s.role.clone()).collect()
    }
}

/// Generated splits plus the ground truth the analyses are checked against.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    /// Noun stems given two readings (Noun / Adj).
    pub ambiguous_stems: BTreeSet<String>,
    /// Stems that only ever appear in the test split.
    pub novel_stems: BTreeSet<String>,
    /// Number of test tokens whose stem was replaced by a novel one.
    pub novel_tokens: usize,
}

const CONSONANTS: &[char] = &['b', 'c', 'ç', 'd', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 'ş', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'ı', 'i', 'o', 'ö', 'u', 'ü'];

/// Vowel-final stems of two or three CV syllables; vowel-final stems keep
/// `stem + suffix` forms unambiguous because suffix endings differ.
fn stem_pool(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = if rng.random_bool(0.5) { 2 } else { 3 };
        let stem: String = (0..syllables)
            .flat_map(|_| [*CONSONANTS.choose(rng).unwrap(), *VOWELS.choose(rng).unwrap()])
            .collect();
        if seen.insert(stem.clone()) {
            out.push(stem);
        }
    }
    out
}

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adverbs: Vec<String>,
    novel: Vec<String>,
    ambiguous: HashSet<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Noun,
    Verb,
    Adverb,
}

struct Draft {
    kind: Kind,
    stem: String,
    reading_adj: bool,
    derived: bool,
    suffix: Option<usize>,
    clause: usize,
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    lex: Lexicon,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn draft_sentence(&mut self) -> Vec<Draft> {
        let spec = self.spec;
        let rng = &mut self.rng;
        let k = rng.random_range(spec.min_predicates..=spec.max_predicates);
        let len = rng.random_range(spec.min_length.max(2 * k)..=spec.max_length);
        let slots = len - k;
        let mut clause_sizes = vec![1usize; k.max(1)];
        if k == 0 {
            clause_sizes[0] = slots;
        } else {
            for _ in 0..slots - k {
                clause_sizes[rng.random_range(0..k)] += 1;
            }
        }
        let role_ids: Vec<usize> = (0..spec.suffixes.len())
            .filter(|&i| spec.suffixes[i].role != NONROLE)
            .collect();
        let filler_ids: Vec<usize> = (0..spec.suffixes.len())
            .filter(|&i| spec.suffixes[i].role == NONROLE)
            .collect();
        let mut drafts = Vec::with_capacity(len);
        for (c, &size) in clause_sizes.iter().enumerate() {
            let mut free: Vec<usize> = role_ids.clone();
            for _ in 0..size {
                let filler = free.is_empty() || rng.random_bool(spec.filler_rate);
                let (kind, suffix) = if filler {
                    let adverb = !self.lex.adverbs.is_empty() && (filler_ids.is_empty() || rng.random_bool(0.5));
                    if adverb || filler_ids.is_empty() && free.is_empty() {
                        (Kind::Adverb, None)
                    } else if filler_ids.is_empty() {
                        let pick = free.swap_remove(rng.random_range(0..free.len()));
                        (Kind::Noun, Some(pick))
                    } else {
                        (Kind::Noun, Some(*filler_ids.choose(rng).unwrap()))
                    }
                } else {
                    let pick = free.swap_remove(rng.random_range(0..free.len()));
                    (Kind::Noun, Some(pick))
                };
                let stem = match kind {
                    Kind::Adverb if !self.lex.adverbs.is_empty() => self.lex.adverbs.choose(rng).unwrap().clone(),
                    _ => self.lex.nouns.choose(rng).unwrap().clone(),
                };
                let kind = if kind == Kind::Adverb && self.lex.adverbs.is_empty() {
                    Kind::Noun
                } else {
                    kind
                };
                let suffix = if kind == Kind::Noun && suffix.is_none() {
                    Some(*role_ids.first().or(filler_ids.first()).unwrap())
                } else {
                    suffix
                };
                let reading_adj = kind == Kind::Noun && self.lex.ambiguous.contains(&stem) && rng.random_bool(0.5);
                drafts.push(Draft {
                    kind,
                    stem,
                    reading_adj,
                    derived: false,
                    suffix,
                    clause: c,
                });
            }
            if k > 0 {
                drafts.push(Draft {
                    kind: Kind::Verb,
                    stem: self.lex.verbs.choose(rng).unwrap().clone(),
                    reading_adj: false,
                    derived: false,
                    suffix: None,
                    clause: c,
                });
            }
        }
        if rng.random_bool(spec.derivation_rate) {
            let nouns: Vec<usize> = (0..drafts.len()).filter(|&i| drafts[i].kind == Kind::Noun).collect();
            let target = match nouns.choose(rng) {
                Some(&i) => i,
                None => {
                    // no noun to derive: turn the first slot into a role-bearing noun
                    let i = drafts.iter().position(|d| d.kind != Kind::Verb).unwrap_or(0);
                    drafts[i].kind = Kind::Noun;
                    drafts[i].stem = self.lex.nouns.choose(rng).unwrap().clone();
                    drafts[i].suffix = Some(*role_ids.first().or(filler_ids.first()).unwrap());
                    i
                }
            };
            drafts[target].derived = true;
        }
        drafts
    }

    fn render(&mut self, drafts: &[Draft]) -> Result<Sentence> {
        let spec = self.spec;
        let verbs: Vec<usize> = (0..drafts.len()).filter(|&i| drafts[i].kind == Kind::Verb).collect();
        let root = verbs.last().copied();
        let mut tokens = Vec::with_capacity(drafts.len());
        for (i, d) in drafts.iter().enumerate() {
            let mut form = d.stem.clone();
            let mut feats: Vec<String> = Vec::new();
            let pos;
            match d.kind {
                Kind::Noun => {
                    pos = if d.reading_adj { "ADJ" } else { "NOUN" };
                    feats.push(if d.reading_adj { "Adj".into() } else { "Noun".into() });
                    if d.derived {
                        form.push_str(&spec.derivation_suffix);
                        feats.extend(spec.derivation_feats.iter().cloned());
                    }
                    let s = &spec.suffixes[d.suffix.expect("nouns carry a suffix")];
                    form.push_str(&s.surface);
                    feats.extend(s.feats.iter().cloned());
                }
                Kind::Verb => {
                    pos = "VERB";
                    form.push_str(&spec.verb_suffix);
                    feats.extend(spec.verb_feats.iter().cloned());
                }
                Kind::Adverb => {
                    pos = "ADV";
                    feats.push("Adv".into());
                }
            }
            let mut pfeats = feats.clone();
            if d.kind == Kind::Noun && self.rng.random_bool(spec.predicted_error_rate) {
                let others: Vec<&SuffixSpec> = spec
                    .suffixes
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| Some(*j) != d.suffix)
                    .map(|(_, s)| s)
                    .collect();
                if let Some(wrong) = others.choose(&mut self.rng) {
                    let keep = pfeats.len() - spec.suffixes[d.suffix.unwrap()].feats.len();
                    pfeats.truncate(keep);
                    pfeats.extend(wrong.feats.iter().cloned());
                }
            }
            let clause_verb = verbs.get(d.clause).copied();
            let (head, deprel) = match (d.kind, clause_verb, root) {
                (Kind::Verb, _, Some(r)) if r == i => (0, "ROOT"),
                (Kind::Verb, _, Some(r)) => (r + 1, "SUB"),
                (_, Some(v), _) => (v + 1, if d.kind == Kind::Adverb { "MOD" } else { "ARG" }),
                _ => (0, "ROOT"),
            };
            let is_pred = d.kind == Kind::Verb;
            let apreds = verbs
                .iter()
                .enumerate()
                .map(|(c, _)| match (d.kind, d.suffix) {
                    (Kind::Noun, Some(s)) if d.clause == c => spec.suffixes[s].role.clone(),
                    _ => EMPTY.to_string(),
                })
                .collect();
            tokens.push(Token {
                id: i + 1,
                form,
                lemma: d.stem.clone(),
                plemma: d.stem.clone(),
                pos: pos.into(),
                ppos: pos.into(),
                feats,
                pfeats,
                head,
                phead: head,
                deprel: deprel.into(),
                pdeprel: deprel.into(),
                fillpred: is_pred,
                pred: if is_pred { format!("{}.01", d.stem) } else { String::new() },
                apreds,
            });
        }
        Sentence::new(tokens)
    }

    fn split(&mut self, n: usize, seen: &mut HashSet<Vec<String>>) -> Result<Vec<Sentence>> {
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while out.len() < n {
            attempts += 1;
            if attempts > 100 * n + 1000 {
                return Err(Error::Config(
                    "could not generate enough distinct sentences; enlarge the lexicon or length range".into(),
                ));
            }
            let drafts = self.draft_sentence();
            let s = self.render(&drafts)?;
            let key: Vec<String> = s.tokens().iter().map(|t| t.form.clone()).collect();
            if seen.insert(key) {
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Replaces the stems of exactly `round(rate·tokens)` test tokens with
    /// novel stems. Returns the number of replaced tokens.
    fn inject_novel(&mut self, test: &mut [Sentence]) -> Result<usize> {
        let positions: Vec<(usize, usize)> = test
            .iter()
            .enumerate()
            .flat_map(|(s, sent)| (0..sent.len()).map(move |t| (s, t)))
            .collect();
        let count = (self.spec.novel_stem_rate * positions.len() as f64).round() as usize;
        if count == 0 || self.lex.novel.is_empty() {
            return Ok(0);
        }
        let chosen = index::sample(&mut self.rng, positions.len(), count);
        let mut edits: Vec<Vec<(usize, String)>> = vec![Vec::new(); test.len()];
        for i in chosen.iter() {
            let (s, t) = positions[i];
            edits[s].push((t, self.lex.novel.choose(&mut self.rng).unwrap().clone()));
        }
        for (s, list) in edits.into_iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let mut tokens = test[s].tokens().to_vec();
            for (t, novel) in list {
                let tok = &mut tokens[t];
                let old = tok.lemma.clone();
                tok.form = format!("{}{}", novel, &tok.form[old.len()..]);
                tok.lemma = novel.clone();
                tok.plemma = novel.clone();
                if tok.fillpred {
                    tok.pred = format!("{}.01", novel);
                }
            }
            test[s] = Sentence::new(tokens)?;
        }
        Ok(count)
    }
}

/// Generates train/dev/test splits with pairwise distinct sentences.
/// Identical `(spec, seed)` pairs produce identical corpora.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_novel = if spec.novel_stem_rate > 0.0 { spec.noun_stems.max(20) } else { 0 };
    let pool = stem_pool(&mut rng, spec.noun_stems + spec.verb_stems + spec.adverbs + n_novel);
    let mut it = pool.into_iter();
    let nouns: Vec<String> = it.by_ref().take(spec.noun_stems).collect();
    let verbs: Vec<String> = it.by_ref().take(spec.verb_stems).collect();
    let adverbs: Vec<String> = it.by_ref().take(spec.adverbs).collect();
    let novel: Vec<String> = it.collect();
    let n_ambiguous = (spec.ambiguity_rate * nouns.len() as f64).round() as usize;
    let mut shuffled = nouns.clone();
    shuffled.shuffle(&mut rng);
    let ambiguous: HashSet<String> = shuffled.into_iter().take(n_ambiguous).collect();
    let mut g = Generator {
        spec,
        lex: Lexicon {
            nouns,
            verbs,
            adverbs,
            novel,
            ambiguous,
        },
        rng,
    };
    let mut seen = HashSet::new();
    let train = g.split(spec.train_sentences, &mut seen)?;
    let dev = g.split(spec.dev_sentences, &mut seen)?;
    let mut test = g.split(spec.test_sentences, &mut seen)?;
    let novel_tokens = g.inject_novel(&mut test)?;
    Ok(SyntheticCorpus {
        train,
        dev,
        test,
        ambiguous_stems: g.lex.ambiguous.iter().cloned().collect(),
        novel_stems: g.lex.novel.iter().cloned().collect(),
        novel_tokens,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::super::conll::{parse_conll09, write_conll09};
    use super::super::frames::{build_label_set, extract_frames};
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec::default();
        let a = generate_synthetic(&spec, 3).unwrap();
        let b = generate_synthetic(&spec, 3).unwrap();
        let c = generate_synthetic(&spec, 4).unwrap();
        assert_eq!(write_conll09(&a.train), write_conll09(&b.train));
        assert_eq!(write_conll09(&a.test), write_conll09(&b.test));
        assert_ne!(write_conll09(&a.train), write_conll09(&c.train));
    }

    #[test]
    fn output_is_valid_conll() {
        let spec = SynthSpec::default();
        let corpus = generate_synthetic(&spec, 1).unwrap();
        for split in [&corpus.train, &corpus.dev, &corpus.test] {
            assert_eq!(&parse_conll09(&write_conll09(split)).unwrap(), split);
        }
        assert_eq!(corpus.train.len(), spec.train_sentences);
        assert_eq!(corpus.dev.len(), spec.dev_sentences);
    }

    #[test]
    fn roles_follow_suffixes() {
        let spec = SynthSpec::default();
        let corpus = generate_synthetic(&spec, 2).unwrap();
        for s in &corpus.train {
            for (col, &p) in s.predicates().iter().enumerate() {
                for t in s.tokens() {
                    let role = &t.apreds[col];
                    if role != NONROLE {
                        let suf = spec.suffixes.iter().find(|x| &x.role == role).unwrap();
                        assert!(t.form.ends_with(&suf.surface), "{} / {}", t.form, role);
                        assert_ne!(t.id - 1, p);
                    }
                }
            }
        }
    }

    #[test]
    fn label_inventory_matches_spec_roles() {
        let spec = SynthSpec::default();
        let corpus = generate_synthetic(&spec, 5).unwrap();
        let inv = build_label_set(&extract_frames(&corpus.train), 10).unwrap();
        let found: BTreeSet<String> = inv.counts.keys().cloned().collect();
        assert_eq!(found, spec.roles());
        assert_eq!(inv.frequent_roles, spec.roles().len());
    }

    #[test]
    fn no_ambiguity_means_one_feature_set_per_form() {
        let spec = SynthSpec {
            ambiguity_rate: 0.0,
            train_sentences: 400,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec, 6).unwrap();
        let mut analyses: HashMap<&str, HashSet<&Vec<String>>> = HashMap::new();
        for s in &corpus.train {
            for t in s.tokens() {
                analyses.entry(&t.form).or_default().insert(&t.feats);
            }
        }
        assert!(analyses.values().all(|a| a.len() == 1));
        assert!(corpus.ambiguous_stems.is_empty());
    }

    #[test]
    fn derivation_rate_controls_derived_sentence_fraction() {
        let spec = SynthSpec {
            train_sentences: 1000,
            dev_sentences: 0,
            test_sentences: 0,
            derivation_rate: 0.3,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec, 7).unwrap();
        let derived = corpus
            .train
            .iter()
            .filter(|s| s.tokens().iter().any(|t| t.feats.iter().any(|f| f == "DB")))
            .count();
        let frac = derived as f64 / 1000.0;
        assert!((frac - 0.3).abs() <= 0.03, "derived fraction {}", frac);
    }

    #[test]
    fn splits_are_disjoint() {
        let corpus = generate_synthetic(&SynthSpec::default(), 8).unwrap();
        let key = |s: &Sentence| s.tokens().iter().map(|t| t.form.clone()).collect::<Vec<_>>();
        let train: HashSet<_> = corpus.train.iter().map(key).collect();
        assert!(corpus.dev.iter().chain(&corpus.test).all(|s| !train.contains(&key(s))));
    }

    #[test]
    fn inconsistent_specs_are_rejected() {
        for bad in [
            SynthSpec {
                ambiguity_rate: 1.5,
                ..SynthSpec::default()
            },
            SynthSpec {
                min_length: 5,
                max_length: 4,
                ..SynthSpec::default()
            },
            SynthSpec {
                suffixes: vec![suffix("nin", &["Gen"], NONROLE)],
                ..SynthSpec::default()
            },
        ] {
            assert!(generate_synthetic(&bad, 0).is_err());
        }
    }

    #[test]
    fn toml_round_trip() {
        let spec = SynthSpec {
            derivation_rate: 0.25,
            ..SynthSpec::default()
        };
        assert_eq!(SynthSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        let partial = SynthSpec::from_toml("train_sentences = 7\n").unwrap();
        assert_eq!(partial.train_sentences, 7);
        assert_eq!(partial.suffixes, SynthSpec::default().suffixes);
        assert!(SynthSpec::from_toml("no_such_key = 1\n").is_err());
    }

    #[test]
    fn predicted_errors_touch_only_pfeats() {
        let spec = SynthSpec {
            predicted_error_rate: 1.0,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec, 9).unwrap();
        let nouns = corpus.train.iter().flat_map(|s| s.tokens()).filter(|t| t.pos == "NOUN");
        let mut n = 0;
        for t in nouns {
            assert_ne!(t.feats, t.pfeats);
            n += 1;
        }
        assert!(n > 0);
    }
}

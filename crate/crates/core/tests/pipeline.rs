use std::collections::BTreeSet;

use srl_core::analysis::{
    ambiguity_buckets, ambiguous_forms, complexity_proxy, Bin, distance_bins, feature_count_bins, PlotFormat, PlotTable,
    DISTANCE_BINS, FEATURE_BINS,
};
use srl_core::corpus::{generate_synthetic, ColumnMode, Sentence, SynthSpec, Token, NONROLE};
use srl_core::evaluator::score_corpus;
use srl_core::model::{Labeler, ModelConfig};
use srl_core::subword::Rho;
use srl_core::trainer::{train, TrainConfig};

fn small_config(rho: Rho, mode: ColumnMode) -> ModelConfig {
    ModelConfig {
        rho,
        column_mode: mode,
        embedding_size: 8,
        hidden_size: 8,
        ..ModelConfig::default()
    }
}

fn rebuild(s: &Sentence, f: impl Fn(&mut Token)) -> Sentence {
    let tokens = s
        .tokens()
        .iter()
        .cloned()
        .map(|mut t| {
            f(&mut t);
            t
        })
        .collect();
    Sentence::new(tokens).unwrap()
}

#[test]
fn small_model_memorizes_small_corpus() {
    let spec = SynthSpec {
        train_sentences: 50,
        dev_sentences: 0,
        test_sentences: 0,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec, 2).unwrap();
    let config = ModelConfig {
        embedding_size: 8,
        hidden_size: 8,
        ..ModelConfig::default()
    };
    // per-frame SGD at the default rate of 1.0 oscillates at this size
    let tc = TrainConfig {
        max_epochs: 100,
        early_stop_patience: 100,
        initial_lr: 0.2,
        ..TrainConfig::default()
    };
    let (model, log) = train(&config, &corpus.train, &corpus.train, &tc).unwrap();
    let f1 = score_corpus(&corpus.train, &model.annotate(&corpus.train).unwrap()).unwrap().f1;
    assert_eq!(f1, 100.0, "best epoch {:?}", log.best_epoch);
}

#[test]
fn predicted_mode_never_reads_gold_columns() {
    let spec = SynthSpec {
        train_sentences: 30,
        dev_sentences: 10,
        test_sentences: 10,
        predicted_error_rate: 0.3,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec, 3).unwrap();
    let corrupt = |ss: &[Sentence]| -> Vec<Sentence> {
        ss.iter()
            .map(|s| {
                rebuild(s, |t| {
                    t.lemma = "zzz".into();
                    t.feats = vec!["Bogus".into()];
                })
            })
            .collect()
    };
    let tc = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    };
    for rho in [Rho::Morph, Rho::Char3] {
        let config = small_config(rho, ColumnMode::Predicted);
        let (a, _) = train(&config, &corpus.train, &corpus.dev, &tc).unwrap();
        let (b, _) = train(&config, &corrupt(&corpus.train), &corrupt(&corpus.dev), &tc).unwrap();
        assert_eq!(a.to_container().to_bytes(), b.to_container().to_bytes());
        assert_eq!(
            a.frame_distributions(&corpus.test).unwrap(),
            a.frame_distributions(&corrupt(&corpus.test)).unwrap()
        );
    }
    // the gold-mode morph model does read them
    let gold = Labeler::new(small_config(Rho::Morph, ColumnMode::Gold), &corpus.train).unwrap();
    assert_ne!(
        gold.frame_distributions(&corpus.test).unwrap(),
        gold.frame_distributions(&corrupt(&corpus.test)).unwrap()
    );
}

#[test]
fn predicate_flag_moves_the_output() {
    let spec = SynthSpec {
        train_sentences: 20,
        dev_sentences: 0,
        test_sentences: 0,
        min_predicates: 2,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec, 4).unwrap();
    let model = Labeler::new(small_config(Rho::Char, ColumnMode::Gold), &corpus.train).unwrap();
    let s = corpus.train.iter().find(|s| s.predicates().len() >= 2).unwrap();
    let words = model.encode_sentence(s).unwrap();
    let a = model.params.label_distributions(&words, s.predicates()[0]).unwrap();
    let b = model.params.label_distributions(&words, s.predicates()[1]).unwrap();
    assert_ne!(a, b);
}

#[test]
fn ambiguity_buckets_follow_generator_truth() {
    let spec = SynthSpec {
        train_sentences: 300,
        dev_sentences: 0,
        test_sentences: 60,
        ambiguity_rate: 0.25,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec, 5).unwrap();
    let forms = ambiguous_forms(&corpus.train);
    assert!(!forms.is_empty());
    // every ambiguous form belongs to a planted stem, and every planted stem
    // seen with both readings of one form is found
    let mut both = BTreeSet::new();
    let mut seen: std::collections::BTreeMap<String, BTreeSet<String>> = Default::default();
    for s in &corpus.train {
        for t in s.tokens() {
            seen.entry(t.form.to_lowercase()).or_default().insert(t.pos.clone());
        }
    }
    for s in &corpus.train {
        for t in s.tokens() {
            let f = t.form.to_lowercase();
            if forms.contains(&f) {
                assert!(corpus.ambiguous_stems.contains(&t.lemma), "{} from {}", f, t.lemma);
            }
            if corpus.ambiguous_stems.contains(&t.lemma) && seen[&f].len() == 2 {
                both.insert(f);
            }
        }
    }
    assert_eq!(both, forms);

    // bucket supports against a recount on the test split
    let r = ambiguity_buckets(&corpus.train, &corpus.test, &corpus.test, false).unwrap();
    let (mut amb, mut rest) = (0, 0);
    for s in &corpus.test {
        for col in 0..s.predicates().len() {
            for t in s.tokens() {
                if t.apreds[col] != NONROLE {
                    if forms.contains(&t.form.to_lowercase()) {
                        amb += 1;
                    } else {
                        rest += 1;
                    }
                }
            }
        }
    }
    assert_eq!(r.bucket("ambiguous").unwrap().support, amb);
    assert_eq!(r.bucket("non-ambiguous").unwrap().support, rest);
    assert_eq!(r.bucket("ambiguous").unwrap().report.unwrap().f1, 100.0);

    let none = generate_synthetic(&SynthSpec { ambiguity_rate: 0.0, ..spec }, 5).unwrap();
    let r = ambiguity_buckets(&none.train, &none.test, &none.test, false).unwrap();
    assert_eq!(r.bucket("ambiguous").unwrap().support, 0);
}

#[test]
fn complexity_proxy_tracks_ambiguity_rate() {
    for rate in [0.1, 0.3] {
        let spec = SynthSpec {
            train_sentences: 1500,
            dev_sentences: 0,
            test_sentences: 0,
            ambiguity_rate: rate,
            derivation_rate: 0.0,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec, 6).unwrap();
        let proxy = complexity_proxy(&corpus.train).unwrap();
        assert!((proxy - 100.0 * rate).abs() <= 5.0, "rate {} proxy {}", rate, proxy);
    }
}

#[test]
fn bin_supports_match_recount() {
    let spec = SynthSpec {
        train_sentences: 40,
        dev_sentences: 10,
        test_sentences: 80,
        max_length: 14,
        derivation_rate: 0.3,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec, 8).unwrap();
    let model = Labeler::new(small_config(Rho::Char3, ColumnMode::Gold), &corpus.train).unwrap();
    let pred = model.annotate(&corpus.test).unwrap();
    let args = || {
        corpus.test.iter().flat_map(|s| {
            s.predicates().iter().enumerate().flat_map(move |(col, &p)| {
                s.tokens()
                    .iter()
                    .enumerate()
                    .filter(move |(_, t)| t.apreds[col] != NONROLE)
                    .map(move |(i, t)| (i.abs_diff(p), t.feats.len()))
            })
        })
    };
    let dist = distance_bins(&corpus.test, &pred, &DISTANCE_BINS).unwrap();
    for b in &dist.buckets {
        let n = args().filter(|&(d, _)| d >= 1 && bin_key(d - 1, &DISTANCE_BINS) == Some(b.key.clone())).count();
        assert_eq!(b.support, n, "bin {}", b.key);
    }
    assert_eq!(dist.population(), args().count());
    let feats = feature_count_bins(&corpus.test, &pred, &FEATURE_BINS).unwrap();
    for b in &feats.buckets {
        let n = args().filter(|&(_, f)| bin_key(f, &FEATURE_BINS) == Some(b.key.clone())).count();
        assert_eq!(b.support, n, "bin {}", b.key);
    }
    assert_eq!(feats.population(), args().count());

    let table = PlotTable::from_buckets(&[("char3", &dist), ("char3", &feats)]);
    for format in [PlotFormat::Tsv, PlotFormat::Csv] {
        let text = table.emit(format).unwrap();
        assert_eq!(PlotTable::parse(&text, format).unwrap(), table);
        assert_eq!(table.emit(format).unwrap(), text);
    }
}

fn bin_key(v: usize, bins: &[Bin]) -> Option<String> {
    bins.iter().find(|b| b.contains(v)).map(Bin::key)
}

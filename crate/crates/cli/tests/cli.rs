use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use srl_core::corpus::parse_conll09;
use srl_core::evaluator::EvalReport;
use srl_core::textio::KeyValues;
use tempfile::TempDir;

const FIXTURE_SPEC: &str = "\
train_sentences = 40
dev_sentences = 10
test_sentences = 10
noun_stems = 12
verb_stems = 4
adverbs = 3
";

fn srl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = srl(args);
    assert!(
        out.status.success(),
        "srl {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(spec: &str, seed: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec_path = dir.path().join("spec.toml");
        fs::write(&spec_path, spec).unwrap();
        let out = dir.path().join("data");
        ok(&["synth", "--spec", s(&spec_path), "--seed", seed, "--out", s(&out)]);
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data(&self, split: &str) -> PathBuf {
        self.path(&format!("data/{}.conll09", split))
    }

    fn train(&self, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(out);
        let train = self.data("train");
        let dev = self.data("dev");
        let mut args = vec![
            "train",
            "--train",
            s(&train),
            "--dev",
            s(&dev),
            "--out",
            s(&out),
            "--embedding-size",
            "8",
            "--hidden-size",
            "8",
        ];
        if !extra.contains(&"--max-epochs") {
            args.extend_from_slice(&["--max-epochs", "3"]);
        }
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn report(path: &Path) -> EvalReport {
    EvalReport::from_key_values(&KeyValues::parse(&fs::read_to_string(path).unwrap()).unwrap()).unwrap()
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(srl(&["--help"]).status.code(), Some(0));
    assert_eq!(srl(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(srl(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(srl(&[]).status.code(), Some(1));
}

#[test]
fn synth_writes_parseable_deterministic_splits() {
    let a = Fixture::new(FIXTURE_SPEC, "7");
    let b = Fixture::new(FIXTURE_SPEC, "7");
    let c = Fixture::new(FIXTURE_SPEC, "8");
    for (split, n) in [("train", 40), ("dev", 10), ("test", 10)] {
        let text = fs::read_to_string(a.data(split)).unwrap();
        assert_eq!(parse_conll09(&text).unwrap().len(), n);
        assert_eq!(text, fs::read_to_string(b.data(split)).unwrap());
    }
    assert_ne!(
        fs::read(a.data("train")).unwrap(),
        fs::read(c.data("train")).unwrap()
    );
    let manifest = KeyValues::parse(&fs::read_to_string(a.path("data/manifest.kv")).unwrap()).unwrap();
    assert_eq!(manifest.get("seed"), Some("7"));
}

#[test]
fn synth_oov_rate_tracks_novel_stem_rate() {
    // A small inventory over many sentences: every in-vocabulary form is
    // seen in training, so novel stems are the only source of OOV tokens.
    let spec = "\
train_sentences = 400
dev_sentences = 20
test_sentences = 200
noun_stems = 5
verb_stems = 2
adverbs = 2
ambiguity_rate = 0.0
derivation_rate = 0.0
novel_stem_rate = 0.3
";
    let f = Fixture::new(spec, "3");
    let out = ok(&["stats", "--corpus", s(&f.data("test")), "--train", s(&f.data("train"))]);
    let kv = KeyValues::parse(&out).unwrap();
    let oov: f64 = kv.parsed("oov").unwrap();
    assert!((oov - 30.0).abs() <= 1.0, "oov {}", oov);
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let f = Fixture::new(FIXTURE_SPEC, "1");
    let a = f.train("run_a", &["--seed", "4"]);
    let b = f.train("run_b", &["--seed", "4"]);
    for name in ["model.ckpt", "state.ckpt", "log.tsv", "log.kv", "timing.tsv", "run.toml"] {
        assert!(a.join(name).is_file(), "{} missing", name);
    }
    let log = fs::read_to_string(a.join("log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert_eq!(log, fs::read_to_string(b.join("log.tsv")).unwrap());
    assert_eq!(fs::read(a.join("model.ckpt")).unwrap(), fs::read(b.join("model.ckpt")).unwrap());
    let run = fs::read_to_string(a.join("run.toml")).unwrap();
    assert!(run.contains("seed = 4"), "{}", run);
}

#[test]
fn train_resumes_to_the_same_result() {
    let f = Fixture::new(FIXTURE_SPEC, "1");
    let full = f.train("full", &[]);
    let part = f.train("part", &["--max-epochs", "1"]);
    let state = part.join("state.ckpt");
    let train = f.data("train");
    let dev = f.data("dev");
    let again = f.path("again");
    ok(&[
        "train", "--train", s(&train), "--dev", s(&dev), "--out", s(&again), "--resume", s(&state), "--max-epochs", "3",
    ]);
    assert_eq!(fs::read(full.join("log.tsv")).unwrap(), fs::read(again.join("log.tsv")).unwrap());
    assert_eq!(fs::read(full.join("model.ckpt")).unwrap(), fs::read(again.join("model.ckpt")).unwrap());
}

#[test]
fn missing_dev_file_names_the_path() {
    let f = Fixture::new(FIXTURE_SPEC, "1");
    let missing = f.path("nowhere/dev.conll09");
    let out = srl(&[
        "train",
        "--train",
        s(&f.data("train")),
        "--dev",
        s(&missing),
        "--out",
        s(&f.path("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn bad_config_is_a_usage_error() {
    let f = Fixture::new(FIXTURE_SPEC, "1");
    let cfg = f.path("bad.toml");
    fs::write(&cfg, "[model]\nhidden_size = 0\n").unwrap();
    let out = srl(&[
        "train",
        "--config",
        s(&cfg),
        "--train",
        s(&f.data("train")),
        "--dev",
        s(&f.data("dev")),
        "--out",
        s(&f.path("out")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_corpus_is_a_data_error() {
    let f = Fixture::new(FIXTURE_SPEC, "1");
    let bad = f.path("bad.conll09");
    fs::write(&bad, "1\tonly\tthree\n\n").unwrap();
    let out = srl(&["stats", "--corpus", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.conll09"));
}

#[test]
fn eval_refuses_unknown_labels_with_both_fingerprints() {
    let f = Fixture::new(FIXTURE_SPEC, "1");
    let run = f.train("run", &[]);
    let text = fs::read_to_string(f.data("test")).unwrap();
    let renamed: String = text
        .lines()
        .map(|l| {
            l.split('\t')
                .map(|c| if c == "A0" { "ZZ" } else { c })
                .collect::<Vec<_>>()
                .join("\t")
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    let odd = f.path("odd.conll09");
    fs::write(&odd, renamed).unwrap();
    let fp = |corpus: &Path| {
        KeyValues::parse(&ok(&["stats", "--corpus", s(corpus)]))
            .unwrap()
            .require("label_fingerprint")
            .unwrap()
            .to_string()
    };
    let out = srl(&["eval", "--model", s(&run.join("model.ckpt")), "--test", s(&odd)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&fp(&f.data("train"))), "{}", err);
    assert!(err.contains(&fp(&odd)), "{}", err);
    assert!(err.contains("ZZ"), "{}", err);
}

#[test]
fn eval_ensemble_analyze_and_compare() {
    let f = Fixture::new(FIXTURE_SPEC, "1");
    let run = f.train("run", &[]);
    let model = run.join("model.ckpt");
    let test = f.data("test");
    let (rep, dump, pred) = (f.path("eval.kv"), f.path("test.dist"), f.path("pred.conll09"));
    let printed = ok(&[
        "eval",
        "--model",
        s(&model),
        "--test",
        s(&test),
        "--report",
        s(&rep),
        "--dump",
        s(&dump),
        "--predictions",
        s(&pred),
    ]);
    assert!(printed.contains("f1"));
    let base = report(&rep);

    // averaging a model with itself reproduces it
    let avg = f.path("avg.kv");
    ok(&[
        "ensemble", "--mode", "avg", "--dumps", s(&dump), s(&dump), "--test", s(&test), "--report", s(&avg),
    ]);
    assert_eq!(report(&avg).counts(), base.counts());

    // stacking without held-out dumps is refused
    let out = srl(&["ensemble", "--mode", "sg", "--dumps", s(&dump), s(&dump), "--test", s(&test)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dev-dumps"));

    // stacking with them runs
    let dev = f.data("dev");
    let dev_dump = f.path("dev.dist");
    ok(&["eval", "--model", s(&model), "--test", s(&dev), "--dump", s(&dev_dump)]);
    ok(&[
        "ensemble",
        "--mode",
        "sg",
        "--dumps",
        s(&dump),
        s(&dump),
        "--dev-dumps",
        s(&dev_dump),
        s(&dev_dump),
        "--dev",
        s(&dev),
        "--test",
        s(&test),
        "--stacker-epochs",
        "2",
    ]);

    let named = format!("char={}", s(&pred));
    let dist = ok(&["analyze", "--name", "distance", "--gold", s(&test), "--pred", &named]);
    let lines: Vec<&str> = dist.lines().collect();
    assert_eq!(lines[0], "model\tbucket\tf1\tprecision\trecall\tsupport");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("char\t0-4\t"));

    let targeted = ok(&["analyze", "--name", "targeted", "--gold", s(&test), "--pred", &named]);
    let row: Vec<&str> = targeted.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[2], format!("{:.4}", base.f1));
    assert_eq!(row[5], base.gold.to_string());

    let train = f.data("train");
    for name in ["ambiguity", "derivation", "features"] {
        ok(&["analyze", "--name", name, "--gold", s(&test), "--train", s(&train), "--pred", &named, "--format", "csv"]);
    }
    let cx = ok(&["analyze", "--name", "complexity", "--train", s(&train)]);
    assert!(cx.starts_with("corpus\tcomplexity\n"));

    let out = srl(&["analyze", "--name", "sentiment", "--gold", s(&test), "--pred", &named]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["ambiguity", "derivation", "distance", "features", "targeted", "complexity"] {
        assert!(err.contains(name), "{}", err);
    }

    let word = f.path("word.kv");
    fs::write(&word, "correct=1\npredicted=4\ngold=4\n").unwrap();
    let table = ok(&[
        "compare",
        "--report",
        &format!("word={}", s(&word)),
        "--report",
        &format!("char={}", s(&rep)),
        "--ensemble",
        &format!("avg={}", s(&avg)),
    ]);
    assert!(table.starts_with("metric\tmodel\tvalue\n"));
    assert!(table.contains("\niow\tchar\t"));
    assert!(table.contains("\niob\tavg\t"));
}

#[test]
fn column_mode_changes_morph_inputs() {
    let spec = format!("{}predicted_error_rate = 0.5\n", FIXTURE_SPEC);
    let f = Fixture::new(&spec, "2");
    let run = f.train("morph", &["--rho", "morph", "--max-epochs", "15", "--lr", "0.5"]);
    let model = run.join("model.ckpt");
    let test = f.data("test");
    let eval = |mode: &str, tag: &str| {
        let rep = f.path(&format!("{}.kv", tag));
        let dump = f.path(&format!("{}.dist", tag));
        ok(&[
            "eval",
            "--model",
            s(&model),
            "--test",
            s(&test),
            "--column-mode",
            mode,
            "--report",
            s(&rep),
            "--dump",
            s(&dump),
        ]);
        (report(&rep), fs::read(&dump).unwrap())
    };
    let (gold_report, gold_dump) = eval("gold", "g");
    let (pred_report, pred_dump) = eval("predicted", "p");
    assert_ne!(gold_dump, pred_dump);
    assert_ne!(gold_report, pred_report);
}

#[test]
fn curve_emits_points_and_fit() {
    let f = Fixture::new(FIXTURE_SPEC, "1");
    let out = f.path("curve.tsv");
    let printed = ok(&[
        "curve",
        "--train",
        s(&f.data("train")),
        "--dev",
        s(&f.data("dev")),
        "--test",
        s(&f.data("test")),
        "--chunk",
        "20",
        "--embedding-size",
        "4",
        "--hidden-size",
        "4",
        "--max-epochs",
        "1",
        "--out",
        s(&out),
    ]);
    let table = fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(2).unwrap().starts_with("40\t"));
    assert!(printed.starts_with("fit f1 = "));
}

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use log::info;
use srl_core::analysis::{
    ambiguity_buckets, complexity_proxy, derivation_buckets, distance_bins, feature_count_bins, parse_bins,
    targeted_f1, Bin, Bucket, BucketReport, PlotFormat, PlotTable, DISTANCE_BINS, FEATURE_BINS,
};
use srl_core::corpus::{
    build_label_set, extract_frames, generate_synthetic, parse_conll09, write_conll09, Sentence, SynthSpec,
};
use srl_core::ensemble::{
    average_combine, check_members, gold_ids, member_fingerprint, stacked_combine, train_stacker, DistributionFile,
    StackerConfig,
};
use srl_core::evaluator::{ioc, iob, iow, score_corpus, EvalReport};
use srl_core::model::{apply_predictions, FrameDistribution, Labeler, MODEL_MAGIC};
use srl_core::nnet::Container;
use srl_core::subword::oov_rate;
use srl_core::textio::{fingerprint, KeyValues};
use srl_core::trainer::{fit_log_curve, learning_curve, TrainConfig, Trainer};

use crate::config::RunConfig;
use crate::{
    Analysis, AnalyzeArgs, Command, CompareArgs, CurveArgs, EnsembleArgs, EnsembleMode, EvalArgs, Format, Named,
    StatsArgs, SynthArgs, TrainArgs, UsageError,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Analyze(a) => analyze(a),
        Command::Compare(a) => compare(a),
        Command::Curve(a) => curve(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let text = read_text(path)?;
    parse_conll09(&text).with_context(|| format!("in {}", path.display()))
}

/// Writes through a sibling temporary file so readers never see a partial file.
fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create directory {}", path.display()))
}

fn plot_format(f: Format) -> PlotFormat {
    match f {
        Format::Tsv => PlotFormat::Tsv,
        Format::Csv => PlotFormat::Csv,
    }
}

fn emit(table: &PlotTable, format: Format, out: Option<&Path>) -> Result<()> {
    let text = table.emit(plot_format(format))?;
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str, what: &str) -> Result<&'a Path> {
    v.as_deref()
        .ok_or_else(|| UsageError(format!("{} needs {}", what, flag)).into())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => SynthSpec::from_toml(&read_text(p)?).with_context(|| format!("in {}", p.display()))?,
        None => SynthSpec::default(),
    };
    let corpus = generate_synthetic(&spec, a.seed)?;
    create_dir(&a.out)?;
    for (name, split) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        write_file(&a.out.join(format!("{}.conll09", name)), write_conll09(split))?;
    }
    let spec_text = spec.to_toml();
    write_file(&a.out.join("spec.toml"), &spec_text)?;
    let mut kv = KeyValues::new();
    kv.push("seed", a.seed);
    kv.push("spec_fingerprint", fingerprint(&spec_text));
    kv.push("train_sentences", corpus.train.len());
    kv.push("dev_sentences", corpus.dev.len());
    kv.push("test_sentences", corpus.test.len());
    kv.push("novel_tokens", corpus.novel_tokens);
    for s in &corpus.ambiguous_stems {
        kv.push("ambiguous_stem", s);
    }
    for s in &corpus.novel_stems {
        kv.push("novel_stem", s);
    }
    write_file(&a.out.join("manifest.kv"), kv.to_text())?;
    println!(
        "wrote {} train, {} dev, {} test sentences to {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        a.out.display()
    );
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let frames = extract_frames(&corpus);
    let mut kv = KeyValues::new();
    kv.push("sentences", corpus.len());
    kv.push("tokens", corpus.iter().map(Sentence::len).sum::<usize>());
    kv.push("frames", frames.len());
    if !frames.is_empty() {
        let inv = build_label_set(&frames, a.min_count)?;
        kv.push("arguments", inv.counts.values().sum::<usize>());
        kv.push("roles", inv.counts.len());
        kv.push("frequent_roles", inv.frequent_roles);
        kv.push("min_count", a.min_count);
        kv.push("label_fingerprint", inv.labels.fingerprint());
        for (role, n) in &inv.counts {
            kv.push(format!("role.{}", role), n);
        }
    }
    if !corpus.is_empty() {
        kv.push("complexity", format!("{:.4}", complexity_proxy(&corpus)?));
    }
    if let Some(t) = &a.train {
        kv.push("oov", format!("{:.4}", oov_rate(&read_corpus(t)?, &corpus)?));
    }
    print!("{}", kv.to_text());
    Ok(())
}

fn save_checkpoint(model: &Labeler, config: &TrainConfig, path: &Path) -> Result<()> {
    let mut c = model.to_container();
    config.to_header(&mut c.header);
    write_file(path, c.to_bytes())
}

fn train(a: TrainArgs) -> Result<()> {
    let train = read_corpus(&a.train)?;
    let dev = read_corpus(&a.dev)?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let mut t = Trainer::load(p).with_context(|| format!("cannot resume from {}", p.display()))?;
            info!("resuming after epoch {}; run settings come from the saved state", t.epochs_done());
            if let Some(n) = a.overrides.max_epochs {
                t.config.max_epochs = n;
            }
            t
        }
        None => {
            let rc = RunConfig::resolve(&a.overrides)?;
            if train.is_empty() {
                return Err(anyhow!(srl_core::Error::InvalidInput(format!(
                    "{} has no sentences",
                    a.train.display()
                ))));
            }
            Trainer::new(Labeler::new(rc.model, &train)?, rc.train)?
        }
    };
    create_dir(&a.out)?;
    let rc = RunConfig {
        model: trainer.model.config.clone(),
        train: trainer.config.clone(),
    };
    write_file(&a.out.join("run.toml"), rc.to_toml())?;
    let instances = trainer.model.instances(&train).context("training corpus")?;
    let model_path = a.out.join("model.ckpt");
    let state_path = a.out.join("state.ckpt");
    while !trainer.finished() {
        let r = trainer.run_epoch(&instances, &dev)?.clone();
        info!(
            "epoch {} loss {:.4} dev {} lr {}",
            r.epoch,
            r.train_loss,
            r.dev_f1.map(|f| format!("{:.2}", f)).unwrap_or_else(|| "-".into()),
            r.lr
        );
        if trainer.improved_last() {
            save_checkpoint(&trainer.best_model(), &trainer.config, &model_path)?;
        }
        trainer.save(&state_path)?;
    }
    let config = trainer.config.clone();
    let (best, log) = trainer.finish();
    save_checkpoint(&best, &config, &model_path)?;
    write_file(&a.out.join("log.tsv"), log.to_table())?;
    write_file(&a.out.join("log.kv"), log.to_key_values().to_text())?;
    write_file(&a.out.join("timing.tsv"), log.timing_table())?;
    println!(
        "{} epochs, best dev F1 {} at epoch {}; model written to {}",
        log.records.len(),
        log.best_dev_f1.map(|f| format!("{:.2}", f)).unwrap_or_else(|| "-".into()),
        log.best_epoch.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
        model_path.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Labeler, Container)> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let c = Container::read_from(BufReader::new(file), MODEL_MAGIC).with_context(|| format!("in {}", path.display()))?;
    let model = Labeler::from_container(&c).with_context(|| format!("in {}", path.display()))?;
    Ok((model, c))
}

fn eval(a: EvalArgs) -> Result<()> {
    let (mut model, container) = load_checkpoint(&a.model)?;
    if let Some(m) = a.column_mode {
        model.config.column_mode = m;
    }
    let test = read_corpus(&a.test)?;
    let frames = extract_frames(&test);
    if !frames.is_empty() {
        let test_labels = build_label_set(&frames, 0)?.labels;
        let unknown: Vec<&str> = test_labels
            .labels()
            .iter()
            .map(String::as_str)
            .filter(|l| !model.labels.contains(l))
            .collect();
        if !unknown.is_empty() {
            return Err(anyhow!(srl_core::Error::Fingerprint {
                what: "label set".into(),
                expected: model.labels.fingerprint(),
                found: test_labels.fingerprint(),
            })
            .context(format!(
                "{} uses labels the model cannot predict ({})",
                a.test.display(),
                unknown.join(", ")
            )));
        }
    }
    let dists = model.frame_distributions(&test)?;
    let predicted = apply_predictions(&test, &dists, &model.labels)?;
    let report = score_corpus(&test, &predicted)?;
    print!("{}", report.to_text());
    if let Some(p) = &a.report {
        let mut kv = report.to_key_values();
        kv.push("rho", model.config.rho);
        kv.push("column_mode", model.config.column_mode);
        kv.push("seed", model.config.seed);
        kv.push("label_fingerprint", model.labels.fingerprint());
        write_file(p, kv.to_text())?;
    }
    if let Some(p) = &a.predictions {
        write_file(p, write_conll09(&predicted))?;
    }
    if let Some(p) = &a.dump {
        let recipe = TrainConfig::from_header(&container.header)
            .with_context(|| format!("{} carries no training recipe; dumps need one", a.model.display()))?;
        let file = DistributionFile {
            labels: model.labels.clone(),
            member_fingerprint: member_fingerprint(&model.config, &recipe),
            rho: model.config.rho.to_string(),
            frames: dists,
        };
        write_file(p, file.to_bytes()?)?;
    }
    Ok(())
}

fn read_dump(path: &Path) -> Result<DistributionFile> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    DistributionFile::read_from(BufReader::new(file)).with_context(|| format!("in {}", path.display()))
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    if a.mode == EnsembleMode::Sg && (a.dev_dumps.is_empty() || a.dev.is_none()) {
        return Err(UsageError(
            "sg mode trains its combiner on held-out predictions: pass --dev-dumps (one per member, in --dumps order) and --dev"
                .into(),
        )
        .into());
    }
    let files = a.dumps.iter().map(|p| read_dump(p)).collect::<Result<Vec<_>>>()?;
    check_members(&files)?;
    let test = read_corpus(&a.test)?;
    let labels = files[0].labels.clone();
    let members: Vec<&[FrameDistribution]> = files.iter().map(|f| f.frames.as_slice()).collect();
    let combined = match a.mode {
        EnsembleMode::Avg => average_combine(&members)?,
        EnsembleMode::Sg => {
            if a.dev_dumps.len() != a.dumps.len() {
                return Err(UsageError(format!(
                    "{} test dumps but {} dev dumps",
                    a.dumps.len(),
                    a.dev_dumps.len()
                ))
                .into());
            }
            let dev_files = a.dev_dumps.iter().map(|p| read_dump(p)).collect::<Result<Vec<_>>>()?;
            let mut all = files.clone();
            all.extend(dev_files.iter().cloned());
            check_members(&all)?;
            for (i, (t, d)) in files.iter().zip(&dev_files).enumerate() {
                if t.rho != d.rho {
                    return Err(anyhow!(srl_core::Error::InvalidInput(format!(
                        "member {} is a {} model on test but a {} model on dev",
                        i, t.rho, d.rho
                    ))));
                }
            }
            let dev = read_corpus(a.dev.as_deref().expect("checked above"))?;
            let gold = gold_ids(&dev, &labels)?;
            let dev_members: Vec<&[FrameDistribution]> = dev_files.iter().map(|f| f.frames.as_slice()).collect();
            let config = StackerConfig {
                hidden: a.hidden,
                lr: a.stacker_lr,
                epochs: a.stacker_epochs,
                seed: a.seed,
            };
            let stacker = train_stacker(&dev_members, &gold, &config)?;
            stacked_combine(&stacker, &members)?
        }
    };
    let mut member_reports = Vec::new();
    for (f, path) in files.iter().zip(&a.dumps) {
        let pred = apply_predictions(&test, &f.frames, &labels).with_context(|| format!("{}", path.display()))?;
        member_reports.push(score_corpus(&test, &pred)?);
    }
    let predicted = apply_predictions(&test, &combined, &labels)?;
    let report = score_corpus(&test, &predicted)?;
    let member_f1: Vec<f64> = member_reports.iter().map(|r| r.f1).collect();
    let gain = iob(&[report.f1], &member_f1).ok();
    for (i, (f, r)) in files.iter().zip(&member_reports).enumerate() {
        println!("member {} ({}) f1 {:.2}", i, f.rho, r.f1);
    }
    print!("{}", report.to_text());
    println!("iob       {}", gain.map(|g| format!("{:.2}", g)).unwrap_or_else(|| "n/a".into()));
    if let Some(p) = &a.report {
        let mut kv = report.to_key_values();
        kv.push("mode", format!("{:?}", a.mode).to_lowercase());
        for (i, (f, r)) in files.iter().zip(&member_reports).enumerate() {
            kv.push(format!("member.{}.rho", i), &f.rho);
            kv.push(format!("member.{}.f1", i), r.f1);
        }
        if let Some(g) = gain {
            kv.push("iob", g);
        }
        write_file(p, kv.to_text())?;
    }
    if let Some(p) = &a.predictions {
        write_file(p, write_conll09(&predicted))?;
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    if a.name == Analysis::Complexity {
        let path = required(&a.train, "--train", "complexity")?;
        let proxy = complexity_proxy(&read_corpus(path)?)?;
        let table = PlotTable {
            columns: vec!["corpus".into(), "complexity".into()],
            rows: vec![vec![path.display().to_string(), format!("{:.4}", proxy)]],
        };
        return emit(&table, a.format, a.out.as_deref());
    }
    let gold = read_corpus(required(&a.gold, "--gold", "this analysis")?)?;
    if a.predictions.is_empty() {
        return Err(UsageError("pass at least one --pred NAME=PATH".into()).into());
    }
    let train = match a.name {
        Analysis::Ambiguity => Some(read_corpus(required(&a.train, "--train", "ambiguity")?)?),
        _ => None,
    };
    let bins = |default: &[Bin]| -> Result<Vec<Bin>> {
        match &a.bins {
            Some(s) => Ok(parse_bins(s)?),
            None => Ok(default.to_vec()),
        }
    };
    let mut reports: Vec<(String, BucketReport)> = Vec::new();
    for Named { name, path } in &a.predictions {
        let pred = read_corpus(path)?;
        let mut r = match a.name {
            Analysis::Ambiguity => {
                ambiguity_buckets(train.as_deref().expect("read above"), &gold, &pred, a.exclude_unseen)?
            }
            Analysis::Derivation => derivation_buckets(&gold, &pred, &a.marker)?,
            Analysis::Distance => distance_bins(&gold, &pred, &bins(&DISTANCE_BINS)?)?,
            Analysis::Features => feature_count_bins(&gold, &pred, &bins(&FEATURE_BINS)?)?,
            Analysis::Targeted => {
                let all = targeted_f1(&gold, &pred, |_, _| true)?;
                BucketReport {
                    name: "targeted".into(),
                    buckets: vec![Bucket {
                        key: "all".into(),
                        support: all.gold,
                        report: (all.gold + all.predicted > 0).then_some(all),
                    }],
                    excluded: Vec::new(),
                }
            }
            Analysis::Complexity => unreachable!("handled above"),
        };
        for b in &mut r.buckets {
            if b.support < a.min_support {
                b.report = None;
            }
        }
        for b in &r.excluded {
            info!("{}: {} excluded from {} with support {}", name, b.key, r.name, b.support);
        }
        reports.push((name.clone(), r));
    }
    let refs: Vec<(&str, &BucketReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    emit(&PlotTable::from_buckets(&refs), a.format, a.out.as_deref())
}

fn read_report(n: &Named) -> Result<EvalReport> {
    let kv = KeyValues::parse(&read_text(&n.path)?).with_context(|| format!("in {}", n.path.display()))?;
    EvalReport::from_key_values(&kv).with_context(|| format!("in {}", n.path.display()))
}

fn compare(a: CompareArgs) -> Result<()> {
    let members = a
        .reports
        .iter()
        .map(|n| Ok((n.name.clone(), read_report(n)?.f1)))
        .collect::<Result<Vec<_>>>()?;
    let ensembles = a
        .ensembles
        .iter()
        .map(|n| Ok((n.name.clone(), read_report(n)?.f1)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut row = |metric: &str, model: &str, v: f64| rows.push(vec![metric.to_string(), model.to_string(), format!("{:.2}", v)]);
    for (n, f) in members.iter().chain(&ensembles) {
        row("f1", n, *f);
    }
    let get = |name: &str| members.iter().find(|(n, _)| n == name).map(|x| x.1);
    if let Some(word) = get("word") {
        for (n, f) in members.iter().filter(|(n, _)| n != "word") {
            row("iow", n, iow(*f, word)?);
        }
    }
    let best_char = members
        .iter()
        .filter(|(n, _)| n.starts_with("char"))
        .map(|x| x.1)
        .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.max(f))));
    if let (Some(morph), Some(c)) = (get("morph"), best_char) {
        row("ioc", "morph", ioc(morph, c)?);
    }
    if !ensembles.is_empty() {
        let (best, _) = ensembles
            .iter()
            .fold(&ensembles[0], |b, e| if e.1 > b.1 { e } else { b });
        let ens: Vec<f64> = ensembles.iter().map(|x| x.1).collect();
        let mem: Vec<f64> = members.iter().map(|x| x.1).collect();
        row("iob", best, iob(&ens, &mem)?);
    }
    let table = PlotTable {
        columns: vec!["metric".into(), "model".into(), "value".into()],
        rows,
    };
    emit(&table, a.format, a.out.as_deref())
}

fn curve(a: CurveArgs) -> Result<()> {
    let rc = RunConfig::resolve(&a.overrides)?;
    let train = read_corpus(&a.train)?;
    let dev = read_corpus(&a.dev)?;
    let test = read_corpus(&a.test)?;
    if a.chunk == 0 {
        return Err(UsageError("--chunk must be at least 1".into()).into());
    }
    let points = learning_curve(&rc.model, &train, a.chunk, &dev, &test, &rc.train)?;
    emit(&PlotTable::from_curve(&points), a.format, a.out.as_deref())?;
    if points.len() >= 2 && points.iter().all(|p| p.1.is_finite()) {
        let xy: Vec<(f64, f64)> = points.iter().map(|&(n, f)| (n as f64, f)).collect();
        let (slope, intercept) = fit_log_curve(&xy)?;
        let line = format!("fit f1 = {:.4} * ln(n) + {:.4}", slope, intercept);
        if a.out.is_some() {
            println!("{}", line);
        } else {
            eprintln!("{}", line);
        }
    }
    Ok(())
}

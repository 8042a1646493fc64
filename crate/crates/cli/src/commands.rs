use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use anyhow::{bail, Context, Result};
use gedprobe::corpus::{self, CorpusSplit, Provenance};
use gedprobe::embed::{self, Signal};
use gedprobe::eval::{self, EvalReport, Predictions, Prf};
use gedprobe::experiment::{self, ExperimentConfig};
use gedprobe::m2::{self, ParseOptions};
use gedprobe::probe::{self, LinearProbe, StoppingMetric, TrainConfig};
use gedprobe::sentence::{load_corpus, save_corpus};
use gedprobe::stimuli::{self, StimuliFormat};
use serde_json::json;

use crate::{
    Cli, Command, ConvertStimuliArgs, EvaluateArgs, ExperimentArgs, ExtractArgs, ProcessCorpusArgs, SampleArgs,
    SignalKind, StatsArgs, StatsFormat, StopOn, SynthesizeArgs, TrainArgs,
};

struct Ctx {
    workspace: Option<PathBuf>,
    force: bool,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.workspace {
            Some(ws) if p.is_relative() => ws.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// True when `out` already exists and should be left alone.
    fn skip(&self, out: &Path) -> bool {
        if out.exists() && !self.force {
            log::warn!("{} exists; skipping (use --force to overwrite)", out.display());
            true
        } else {
            false
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx {
        workspace: cli.workspace.clone(),
        force: cli.force,
    };
    match &cli.command {
        Command::ConvertStimuli(a) => convert_stimuli(&ctx, a),
        Command::ProcessCorpus(a) => process_corpus(&ctx, a),
        Command::Sample(a) => sample(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Synthesize(a) => synthesize(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Exp1(a) => exp1(&ctx, a),
        Command::Exp2(a) => exp2(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
    }
}

fn convert_stimuli(ctx: &Ctx, a: &ConvertStimuliArgs) -> Result<()> {
    let out = ctx.path(&a.out);
    if ctx.skip(&out) {
        return Ok(());
    }
    let format: StimuliFormat = a.format.parse()?;
    let pairs = stimuli::load_minimal_pairs(ctx.path(&a.input), format)?;
    let supplement: Vec<&str> = a.supplement.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
    let inventory = stimuli::build_verb_inventory(&pairs, &supplement);
    let sentences = stimuli::convert_all(&pairs, &inventory)?;
    ensure_parent(&out)?;
    save_corpus(&out, &sentences)?;
    if let Some(p) = &a.inventory {
        write_json(
            &ctx.path(p),
            &json!({
                "forms": inventory.forms(),
                "lemmas": inventory.lemma_groups(),
            }),
        )?;
    }
    println!(
        "{} pairs -> {} sentences; inventory {} forms, {} lemmas",
        pairs.len(),
        sentences.len(),
        inventory.forms().len(),
        inventory.lemma_count()
    );
    Ok(())
}

fn process_corpus(ctx: &Ctx, a: &ProcessCorpusArgs) -> Result<()> {
    let out = ctx.path(&a.out);
    if ctx.skip(&out) {
        return Ok(());
    }
    let input = ctx.path(&a.m2);
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let opts = ParseOptions {
        annotator: a.annotator,
        id_prefix: a.id_prefix.clone().unwrap_or_else(|| format!("{}-", stem(&input))),
    };
    let doc = m2::parse_m2_with(&text, &opts)?;
    let targets: BTreeSet<String> = a.targets.iter().cloned().collect();
    let sentences = m2::process_entries(&doc.entries, &targets)?;
    ensure_parent(&out)?;
    save_corpus(&out, &sentences)?;
    println!(
        "{} entries -> {} sentences with target errors ({} overlapping edits dropped)",
        doc.entries.len(),
        sentences.len(),
        doc.warnings.len()
    );
    Ok(())
}

fn read_forms(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let forms = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    Ok(corpus::expand_inflections(forms))
}

fn sample(ctx: &Ctx, a: &SampleArgs) -> Result<()> {
    let input = ctx.path(&a.corpus);
    let dir = ctx.path(&a.out_dir);
    let name = stem(&input);
    let sample_path = |i: usize| dir.join(format!("{name}.sample{i}.jsonl"));
    if (0..a.k).all(|i| sample_path(i).exists()) && ctx.skip(&sample_path(0)) {
        return Ok(());
    }
    let mut pool = CorpusSplit::new(load_corpus(&input)?, Provenance::Wiked);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    if let Some(held) = &a.holdout_verbs {
        let held = read_forms(&ctx.path(held))?;
        let exceptions: BTreeSet<String> = a.exceptions.iter().map(|s| s.to_lowercase()).collect();
        let before = pool.len();
        pool = corpus::verb_holdout(&pool, &held, &exceptions);
        println!("holdout filter: {before} -> {} sentences", pool.len());
    }
    if let Some(dev_size) = a.dev_size {
        let (dev, rest) = corpus::split_dev(&pool, dev_size, a.dev_seed)?;
        save_corpus(dir.join(format!("{name}.dev.jsonl")), &dev.sentences)?;
        save_corpus(dir.join(format!("{name}.pool.jsonl")), &rest.sentences)?;
        println!("dev {} / pool {}", dev.len(), rest.len());
        pool = rest;
    }
    let samples = corpus::sample_training_sets(&pool, a.k, a.size, a.seed)?;
    for (i, s) in samples.iter().enumerate() {
        save_corpus(sample_path(i), &s.sentences)?;
    }
    println!("{} samples of {} sentences in {}", samples.len(), a.size, dir.display());
    Ok(())
}

fn extract(ctx: &Ctx, a: &ExtractArgs) -> Result<()> {
    let out = ctx.path(&a.out);
    let corpus_path = ctx.path(&a.corpus);
    if !ctx.skip(&out) {
        let mut words = a.extractor.split_whitespace();
        let Some(program) = words.next() else {
            bail!("extractor command is empty");
        };
        ensure_parent(&out)?;
        let mut cmd = Process::new(program);
        cmd.args(words)
            .arg("--model")
            .arg(&a.model)
            .arg("--corpus")
            .arg(&corpus_path)
            .arg("--out")
            .arg(&out);
        if a.include_embedding_layer {
            cmd.arg("--include-embedding-layer");
        }
        if let Some(b) = a.batch {
            cmd.arg("--batch").arg(b.to_string());
        }
        log::info!("running {cmd:?}");
        let status = cmd
            .status()
            .with_context(|| format!("could not start extractor `{program}` (set GEDPROBE_EXTRACTOR)"))?;
        if !status.success() {
            bail!("extractor exited with {status}");
        }
    }
    let store = embed::read_store(&out)?;
    let sentences = load_corpus(&corpus_path)?;
    experiment::check_coverage(&store, &sentences)?;
    if store.header().includes_embedding_layer != a.include_embedding_layer {
        return Err(gedprobe::Error::Format(format!(
            "store embedding-layer flag is {}, expected {}",
            store.header().includes_embedding_layer,
            a.include_embedding_layer
        ))
        .into());
    }
    println!(
        "{}: model {}, {} layers, d={}, {} sentences",
        out.display(),
        store.model_name(),
        store.num_layers(),
        store.hidden_dim(),
        store.len()
    );
    Ok(())
}

fn synthesize(ctx: &Ctx, a: &SynthesizeArgs) -> Result<()> {
    let out = ctx.path(&a.out);
    if ctx.skip(&out) {
        return Ok(());
    }
    let sentences = load_corpus(ctx.path(&a.corpus))?;
    let signal = match a.signal {
        SignalKind::Separable => Signal::LinearSeparable { margin: a.margin },
        SignalKind::Random => Signal::Random,
    };
    let store = embed::synthesize_store(&sentences, a.dim, a.layers, signal, a.sigma, a.seed)?;
    ensure_parent(&out)?;
    store.write_file(&out)?;
    println!("{}: {} sentences, {} layers, d={}", out.display(), store.len(), a.layers, a.dim);
    Ok(())
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let out = ctx.path(&a.out);
    if ctx.skip(&out) {
        return Ok(());
    }
    let mut cfg = match &a.config {
        Some(p) => {
            let p = ctx.path(p);
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<TrainConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.l2 {
        cfg.l2_penalty = v;
    }
    if let Some(s) = a.stop_on {
        cfg.stopping_metric = match s {
            StopOn::DevF1 => StoppingMetric::DevF1,
            StopOn::DevLoss => StoppingMetric::DevLoss,
        };
    }

    let train_path = ctx.path(&a.train);
    let train_sentences = load_corpus(&train_path)?;
    let dev_sentences = load_corpus(ctx.path(&a.dev))?;
    let train_store = embed::read_store(ctx.path(&a.train_store))?;
    let dev_store = embed::read_store(ctx.path(&a.dev_store))?;
    experiment::check_coverage(&train_store, &train_sentences)?;
    experiment::check_coverage(&dev_store, &dev_sentences)?;
    let train_vecs = experiment::labeled_vectors(&train_sentences, &[&train_store], a.layer)?;
    let dev_vecs = experiment::labeled_vectors(&dev_sentences, &[&dev_store], a.layer)?;

    let mut outcome = probe::train(&train_vecs, &dev_vecs, &cfg)?;
    if outcome.degenerate {
        log::warn!("training data holds a single class; the probe is bias-only");
    }
    outcome.probe.model = train_store.model_name().to_string();
    outcome.probe.layer = a.layer;
    outcome.probe.train_provenance.corpus = stem(&train_path);
    ensure_parent(&out)?;
    outcome.probe.save(&out)?;
    if let Some(t) = &a.trace {
        write_json(&ctx.path(t), &outcome.trace)?;
    }
    let p = &outcome.probe.train_provenance;
    let best = &outcome.trace[p.best_epoch - 1];
    println!(
        "layer {}: best epoch {} of {}, dev F1 {:.4}, dev loss {:.4}",
        a.layer, p.best_epoch, p.epochs_run, best.dev_f1, best.dev_loss
    );
    Ok(())
}

fn print_prf(name: &str, p: &Prf) {
    println!(
        "{name:<28} P {:.4}  R {:.4}  F1 {:.4}  (tp {} fp {} fn {})",
        p.precision, p.recall, p.f1, p.true_positives, p.false_positives, p.false_negatives
    );
}

fn print_report(report: &EvalReport) {
    print_prf("overall", &report.overall);
    for (c, p) in &report.per_construction {
        print_prf(c.display_name(), p);
    }
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let gold_path = ctx.path(&a.gold);
    let gold = load_corpus(&gold_path)?;
    let (predictions, source): (Predictions, String) = if let Some(p) = &a.pred {
        let p = ctx.path(p);
        let preds = load_corpus(&p)?
            .into_iter()
            .map(|s| {
                let labels = s.labels.iter().map(|l| l.is_error()).collect();
                (s.id, labels)
            })
            .collect();
        (preds, p.display().to_string())
    } else if let Some(p) = &a.probe {
        let p = ctx.path(p);
        let probe = LinearProbe::load(&p)?;
        let store_path = ctx.path(a.store.as_deref().context("--probe needs --store")?);
        let store = embed::read_store(&store_path)?;
        experiment::check_coverage(&store, &gold)?;
        let preds = experiment::predict_sentences(&probe, &gold, &store, a.threshold)?;
        (preds, p.display().to_string())
    } else if a.baseline {
        (eval::verb_only_baseline(&gold)?, "verb-only".to_string())
    } else {
        bail!("give one of --pred, --probe with --store, or --baseline");
    };
    let mut report = eval::evaluate(&predictions, &gold)?;
    report.provenance.probe = source;
    report.provenance.eval_set = gold_path.display().to_string();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_report(&report);
    }
    Ok(())
}

fn load_experiment(ctx: &Ctx, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let path = ctx.path(&a.config);
    let mut cfg = ExperimentConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(dir) = &a.output_dir {
        cfg.output_dir = ctx.path(dir);
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    Ok(cfg)
}

fn exp1(ctx: &Ctx, a: &ExperimentArgs) -> Result<()> {
    let cfg = load_experiment(ctx, a)?;
    if ctx.skip(&cfg.output_dir.join("exp1_results.json")) {
        return Ok(());
    }
    let result = experiment::experiment1(&cfg)?;
    let written = experiment::write_experiment1(&result, &cfg.output_dir)?;
    for t in result.top_layers() {
        println!(
            "{} {}: top layer {} F1 {:.4} ± {:.4}",
            t.model, t.source, t.layer, t.f1.mean, t.f1.std
        );
    }
    println!("verb-only baseline F1 {:.4}", result.baseline.overall.f1);
    println!("{} files written to {}", written.len(), cfg.output_dir.display());
    Ok(())
}

fn exp2(ctx: &Ctx, a: &ExperimentArgs) -> Result<()> {
    let cfg = load_experiment(ctx, a)?;
    if ctx.skip(&cfg.output_dir.join("exp2_results.json")) {
        return Ok(());
    }
    let result = experiment::experiment2(&cfg)?;
    let written = experiment::write_experiment2(&result, &cfg.output_dir)?;
    println!(
        "held out {} forms; pool {} -> {}; {} eval sentences after masking",
        result.held_out.len(),
        result.pool_with,
        result.pool_without,
        result.eval_sentences
    );
    println!("{} files written to {}", written.len(), cfg.output_dir.display());
    Ok(())
}

fn stats(ctx: &Ctx, a: &StatsArgs) -> Result<()> {
    let path = ctx.path(&a.corpus);
    let sentences = load_corpus(&path)?;
    let name = a.name.clone().unwrap_or_else(|| stem(&path));
    if sentences.iter().any(|s| s.construction.is_some()) {
        let rows = stimuli::stimuli_stats(&sentences);
        match a.format {
            StatsFormat::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
            StatsFormat::Csv => {
                println!("construction,count,mean_length,std_length,mean_length_no_period,std_length_no_period");
                for r in &rows {
                    println!(
                        "{},{},{:.2},{:.2},{:.2},{:.2}",
                        r.construction,
                        r.count,
                        r.mean_length,
                        r.std_length,
                        r.mean_length_no_period,
                        r.std_length_no_period
                    );
                }
            }
            StatsFormat::Markdown => {
                println!("| Construction | Count | Length | Length (no period) |\n|---|---:|---:|---:|");
                for r in &rows {
                    println!(
                        "| {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
                        r.construction.display_name(),
                        r.count,
                        r.mean_length,
                        r.std_length,
                        r.mean_length_no_period,
                        r.std_length_no_period
                    );
                }
            }
        }
    } else {
        let s = corpus::corpus_stats(&CorpusSplit::new(sentences, Provenance::Wiked));
        match a.format {
            StatsFormat::Json => println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "name": name, "stats": s }))?
            ),
            StatsFormat::Csv => {
                println!("name,sentences,mean_length,std_length,mean_errors,std_errors");
                println!(
                    "{name},{},{:.2},{:.2},{:.2},{:.2}",
                    s.sentences, s.mean_length, s.std_length, s.mean_errors, s.std_errors
                );
            }
            StatsFormat::Markdown => {
                println!("| Corpus | Sentences | Length | Errors |\n|---|---:|---:|---:|");
                println!(
                    "| {name} | {} | {:.1} ± {:.1} | {:.1} ± {:.1} |",
                    s.sentences, s.mean_length, s.std_length, s.mean_errors, s.std_errors
                );
            }
        }
    }
    Ok(())
}

//! Probe grids over models, training sources and layers.
//!
//! Every grid cell (model, source, layer, sample) trains its own probe on
//! read-only stores and scores it against the evaluation set. Cells run on
//! a rayon pool; results are collected in task order so reports do not
//! depend on scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusSplit, Provenance};
use crate::embed::{read_store, EmbeddingStore};
use crate::error::{Error, Result};
use crate::eval::{self, AggregateReport, EvalReport, Predictions, ReportFormat, ReportGrid, Series};
use crate::probe::{self, LabeledVectors, LinearProbe, TrainConfig};
use crate::sentence::{load_corpus, AnnotatedSentence, ConstructionId};
use crate::stats::{self, MeanStd, StdKind};

pub const STORE_EXTENSION: &str = "gede";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRange {
    pub start: u16,
    /// Inclusive.
    pub end: u16,
}

impl LayerRange {
    pub fn new(start: u16, end: u16) -> Self {
        LayerRange { start, end }
    }

    pub fn layers(&self) -> Vec<u16> {
        (self.start..=self.end).collect()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.start == 0 || self.start > self.end {
            return Err(Error::InvalidInput(format!(
                "{what}: layer range {}..={} must satisfy 1 <= start <= end",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusPaths {
    /// Concatenated in order (W&I-train then FCE-train).
    pub wi_fce_train: Vec<PathBuf>,
    pub wi_fce_dev: Option<PathBuf>,
    /// Pool the WikEd training samples are drawn from.
    pub wiked_pool: Option<PathBuf>,
    pub wiked_dev: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Experiment2Config {
    /// Multiples of `sample_size`.
    pub sizes: Vec<usize>,
    pub layers: LayerRange,
    /// Whitespace-separated verb forms; derived from the evaluation set's
    /// error tokens when absent.
    pub holdout_verbs: Option<PathBuf>,
    pub exceptions: Vec<String>,
}

impl Default for Experiment2Config {
    fn default() -> Self {
        Experiment2Config {
            sizes: vec![1, 4, 8],
            layers: LayerRange::new(6, 12),
            holdout_verbs: None,
            exceptions: corpus::BE_FORMS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub models: Vec<String>,
    pub layers: LayerRange,
    pub train_sources: Vec<Provenance>,
    pub sample_count: usize,
    pub sample_size: usize,
    /// Sample `i` uses `seed + i`; its probe shuffles with the same seed.
    pub seed: u64,
    pub eval_set: PathBuf,
    pub corpora: CorpusPaths,
    /// Stores live at `{stores_dir}/{model}/{corpus file stem}.gede`.
    pub stores_dir: PathBuf,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub std_kind: StdKind,
    /// Worker threads; rayon's default when absent.
    pub threads: Option<usize>,
    pub experiment2: Experiment2Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: Vec::new(),
            layers: LayerRange::new(1, 12),
            train_sources: vec![Provenance::WiFce, Provenance::Wiked],
            sample_count: 5,
            sample_size: 1936,
            seed: 0,
            eval_set: PathBuf::new(),
            corpora: CorpusPaths::default(),
            stores_dir: PathBuf::from("stores"),
            output_dir: PathBuf::from("reports"),
            train: TrainConfig::default(),
            std_kind: StdKind::Sample,
            threads: None,
            experiment2: Experiment2Config::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && !p.as_os_str().is_empty() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative paths are taken relative to the config
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.eval_set);
        rebase(base, &mut self.stores_dir);
        rebase(base, &mut self.output_dir);
        for p in &mut self.corpora.wi_fce_train {
            rebase(base, p);
        }
        for p in [
            &mut self.corpora.wi_fce_dev,
            &mut self.corpora.wiked_pool,
            &mut self.corpora.wiked_dev,
            &mut self.experiment2.holdout_verbs,
        ]
        .into_iter()
        .flatten()
        {
            rebase(base, p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidInput("config lists no models".into()));
        }
        if self.sample_count == 0 {
            return Err(Error::InvalidInput("sample_count must be at least 1".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::InvalidInput("sample_size must be positive".into()));
        }
        if self.eval_set.as_os_str().is_empty() {
            return Err(Error::InvalidInput("eval_set is required".into()));
        }
        self.layers.validate("layers")?;
        self.experiment2.layers.validate("experiment2.layers")?;
        if self.experiment2.sizes.is_empty() || self.experiment2.sizes.contains(&0) {
            return Err(Error::InvalidInput("experiment2.sizes must be positive multiples".into()));
        }
        self.train.validate()?;
        let c = &self.corpora;
        let training = c
            .wi_fce_train
            .iter()
            .chain(&c.wi_fce_dev)
            .chain(&c.wiked_pool)
            .chain(&c.wiked_dev);
        for p in training {
            if *p == self.eval_set {
                return Err(Error::InvalidInput(format!(
                    "{} is both a training/dev corpus and the evaluation set",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn store_path(&self, model: &str, corpus: &Path) -> PathBuf {
        store_path(&self.stores_dir, model, corpus)
    }

    fn require(&self, p: &Option<PathBuf>, name: &str, source: Provenance) -> Result<PathBuf> {
        p.clone()
            .ok_or_else(|| Error::InvalidInput(format!("corpora.{name} is required for {source}")))
    }
}

pub fn store_path(stores_dir: &Path, model: &str, corpus: &Path) -> PathBuf {
    let stem = corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stores_dir.join(model).join(format!("{stem}.{STORE_EXTENSION}"))
}

pub fn extract_command(model: &str, corpus: &Path, out: &Path) -> String {
    format!(
        "gedprobe extract --model {model} --corpus {} --out {}",
        corpus.display(),
        out.display()
    )
}

/// Opens the store for `corpus` under `model`, or fails with the command
/// that would create it.
pub fn open_store(stores_dir: &Path, model: &str, corpus: &Path) -> Result<EmbeddingStore> {
    let path = store_path(stores_dir, model, corpus);
    if !path.exists() {
        return Err(Error::MissingStore {
            command: extract_command(model, corpus, &path),
            path,
        });
    }
    read_store(&path)
}

/// Every sentence must be indexed with a matching word count.
pub fn check_coverage(store: &EmbeddingStore, sentences: &[AnnotatedSentence]) -> Result<()> {
    for s in sentences {
        let entry = store.entry(&s.id)?;
        if usize::from(entry.word_count) != s.len() {
            return Err(Error::Consistency(format!(
                "sentence `{}` has {} tokens but the store indexes {} words",
                s.id,
                s.len(),
                entry.word_count
            )));
        }
    }
    Ok(())
}

fn find_store<'a>(stores: &[&'a EmbeddingStore], id: &str) -> Result<&'a EmbeddingStore> {
    stores
        .iter()
        .copied()
        .find(|s| s.contains(id))
        .ok_or_else(|| Error::UnknownSentence(id.to_string()))
}

/// Word vectors and error labels for every unmasked token.
pub fn labeled_vectors(
    sentences: &[AnnotatedSentence],
    stores: &[&EmbeddingStore],
    layer: u16,
) -> Result<LabeledVectors> {
    let dim = stores
        .first()
        .map(|s| s.hidden_dim())
        .ok_or_else(|| Error::InvalidInput("no embedding stores given".into()))?;
    let mut out = LabeledVectors::new(dim);
    for s in sentences {
        let m = find_store(stores, &s.id)?.word_vectors(&s.id, layer)?;
        if m.rows() != s.len() {
            return Err(Error::Consistency(format!(
                "sentence `{}` has {} tokens but {} word vectors",
                s.id,
                s.len(),
                m.rows()
            )));
        }
        for (i, label) in s.labels.iter().enumerate() {
            if !s.is_masked(i) {
                out.push(m.row(i), label.is_error())?;
            }
        }
    }
    Ok(out)
}

pub fn predict_sentences(
    probe: &LinearProbe,
    sentences: &[AnnotatedSentence],
    store: &EmbeddingStore,
    threshold: f64,
) -> Result<Predictions> {
    sentences
        .iter()
        .map(|s| {
            let m = store.word_vectors(&s.id, probe.layer)?;
            Ok((s.id.clone(), probe.predict(&m.data, threshold)?.labels))
        })
        .collect()
}

/// Drops sentences whose verb positions all hold an exception form and
/// masks exception-form tokens in the rest.
pub fn mask_exceptions(eval: &[AnnotatedSentence], exceptions: &BTreeSet<String>) -> Vec<AnnotatedSentence> {
    let is_exception = |t: &str| exceptions.contains(&t.to_lowercase());
    eval.iter()
        .filter_map(|s| {
            let verbs: Vec<usize> = match &s.verb_positions {
                Some(v) => v.iter().copied().collect(),
                None => s.error_positions().collect(),
            };
            if !verbs.is_empty() && verbs.iter().all(|&i| is_exception(&s.tokens[i])) {
                return None;
            }
            let mut s = s.clone();
            let masked: BTreeSet<usize> = (0..s.len()).filter(|&i| is_exception(&s.tokens[i])).collect();
            if !masked.is_empty() {
                s.eval_mask.get_or_insert_with(BTreeSet::new).extend(masked);
            }
            Some(s)
        })
        .collect()
}

/// Forms to remove from training data: the configured list, or the
/// evaluation set's agreement-error tokens, expanded to all inflections.
pub fn held_out_verbs(cfg: &Experiment2Config, eval: &[AnnotatedSentence]) -> Result<BTreeSet<String>> {
    match &cfg.holdout_verbs {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let forms = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(str::split_whitespace);
            Ok(corpus::expand_inflections(forms))
        }
        None => Ok(corpus::expand_inflections(
            eval.iter().flat_map(|s| s.error_positions().map(move |i| s.tokens[i].as_str())),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub sample_seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub degenerate: bool,
    pub report: EvalReport,
}

struct Task<'a> {
    model: &'a str,
    layer: u16,
    label: String,
    seed: u64,
    train: &'a [AnnotatedSentence],
    train_stores: Vec<&'a EmbeddingStore>,
    dev: &'a [AnnotatedSentence],
    dev_stores: Vec<&'a EmbeddingStore>,
    eval: &'a [AnnotatedSentence],
    eval_store: &'a EmbeddingStore,
    eval_name: String,
}

impl Task<'_> {
    fn run(&self, base: &TrainConfig) -> Result<ProbeRun> {
        let train = labeled_vectors(self.train, &self.train_stores, self.layer)?;
        let dev = labeled_vectors(self.dev, &self.dev_stores, self.layer)?;
        let cfg = TrainConfig {
            seed: self.seed,
            ..base.clone()
        };
        let mut outcome = probe::train(&train, &dev, &cfg)?;
        outcome.probe.model = self.model.to_string();
        outcome.probe.layer = self.layer;
        outcome.probe.train_provenance.corpus = self.label.clone();
        let preds = predict_sentences(&outcome.probe, self.eval, self.eval_store, 0.5)?;
        let mut report = eval::evaluate(&preds, self.eval)?;
        report.provenance.probe = format!("{}/layer{}/{}", self.model, self.layer, self.label);
        report.provenance.eval_set = self.eval_name.clone();
        log::info!(
            "{} layer {} {}: F1 {:.4} (best epoch {})",
            self.model,
            self.layer,
            self.label,
            report.overall.f1,
            outcome.probe.train_provenance.best_epoch
        );
        Ok(ProbeRun {
            sample_seed: self.seed,
            epochs_run: outcome.probe.train_provenance.epochs_run,
            best_epoch: outcome.probe.train_provenance.best_epoch,
            degenerate: outcome.degenerate,
            report,
        })
    }
}

fn run_tasks(tasks: &[Task<'_>], cfg: &ExperimentConfig) -> Result<Vec<ProbeRun>> {
    let work = || tasks.par_iter().map(|t| t.run(&cfg.train)).collect::<Result<Vec<_>>>();
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Stores keyed by (model, corpus path), opened once and shared read-only.
struct StoreCache {
    stores: BTreeMap<(String, PathBuf), EmbeddingStore>,
}

impl StoreCache {
    fn open(cfg: &ExperimentConfig, corpora: &[(&Path, &[AnnotatedSentence])], layers: &[u16]) -> Result<Self> {
        let mut stores = BTreeMap::new();
        for model in &cfg.models {
            let mut dim = None;
            for (path, sentences) in corpora {
                let key = (model.clone(), path.to_path_buf());
                if stores.contains_key(&key) {
                    continue;
                }
                let store = open_store(&cfg.stores_dir, model, path)?;
                check_coverage(&store, sentences)?;
                for &layer in layers {
                    if layer > store.num_layers() {
                        return Err(Error::LayerOutOfRange {
                            layer,
                            min: 1,
                            max: store.num_layers(),
                        });
                    }
                }
                match dim {
                    None => dim = Some(store.hidden_dim()),
                    Some(d) if d != store.hidden_dim() => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            actual: store.hidden_dim(),
                        })
                    }
                    Some(_) => {}
                }
                stores.insert(key, store);
            }
        }
        Ok(StoreCache { stores })
    }

    fn get(&self, model: &str, path: &Path) -> &EmbeddingStore {
        &self.stores[&(model.to_string(), path.to_path_buf())]
    }
}

/// Training material for one source: one or more training sets, each from
/// a set of corpus files, and a dev set.
struct SourcePlan {
    provenance: Provenance,
    samples: Vec<CorpusSplit>,
    train_files: Vec<(PathBuf, Vec<AnnotatedSentence>)>,
    dev_file: PathBuf,
    dev: Vec<AnnotatedSentence>,
}

fn load_concatenated(paths: &[PathBuf]) -> Result<Vec<(PathBuf, Vec<AnnotatedSentence>)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for p in paths {
        let sentences = load_corpus(p)?;
        for s in &sentences {
            if !seen.insert(s.id.clone()) {
                return Err(Error::InvalidInput(format!(
                    "sentence id `{}` appears in more than one training corpus",
                    s.id
                )));
            }
        }
        out.push((p.clone(), sentences));
    }
    Ok(out)
}

fn plan_source(cfg: &ExperimentConfig, source: Provenance) -> Result<SourcePlan> {
    match source {
        Provenance::WiFce => {
            if cfg.corpora.wi_fce_train.is_empty() {
                return Err(Error::InvalidInput("corpora.wi_fce_train is required for WI_FCE".into()));
            }
            let dev_file = cfg.require(&cfg.corpora.wi_fce_dev, "wi_fce_dev", source)?;
            let train_files = load_concatenated(&cfg.corpora.wi_fce_train)?;
            let all: Vec<AnnotatedSentence> = train_files.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
            let mut split = CorpusSplit::new(all, source);
            split.sample_seed = Some(cfg.seed);
            Ok(SourcePlan {
                provenance: source,
                samples: vec![split],
                train_files,
                dev: load_corpus(&dev_file)?,
                dev_file,
            })
        }
        Provenance::Wiked => {
            let pool_file = cfg.require(&cfg.corpora.wiked_pool, "wiked_pool", source)?;
            let dev_file = cfg.require(&cfg.corpora.wiked_dev, "wiked_dev", source)?;
            let pool = CorpusSplit::new(load_corpus(&pool_file)?, source);
            let samples = corpus::sample_training_sets(&pool, cfg.sample_count, cfg.sample_size, cfg.seed)?;
            Ok(SourcePlan {
                provenance: source,
                samples,
                train_files: vec![(pool_file, pool.sentences)],
                dev: load_corpus(&dev_file)?,
                dev_file,
            })
        }
        Provenance::Synthetic => Err(Error::InvalidInput("SYNTHETIC is not a training source".into())),
    }
}

fn sample_label(split: &CorpusSplit, index: usize, count: usize) -> String {
    if count == 1 {
        split.provenance.name().to_string()
    } else {
        format!("{}#{index}", split.provenance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: String,
    pub source: Provenance,
    pub layer: u16,
    pub runs: Vec<ProbeRun>,
    pub aggregate: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLayer {
    pub model: String,
    pub source: Provenance,
    pub layer: u16,
    pub f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment1Result {
    pub models: Vec<String>,
    pub sources: Vec<Provenance>,
    pub layers: Vec<u16>,
    pub baseline: EvalReport,
    pub cells: Vec<CellResult>,
}

pub fn experiment1(cfg: &ExperimentConfig) -> Result<Experiment1Result> {
    cfg.validate()?;
    let eval = load_corpus(&cfg.eval_set)?;
    let baseline = eval::evaluate(&eval::verb_only_baseline(&eval)?, &eval)?;
    let plans = cfg
        .train_sources
        .iter()
        .map(|&s| plan_source(cfg, s))
        .collect::<Result<Vec<_>>>()?;

    let mut corpora: Vec<(&Path, &[AnnotatedSentence])> = vec![(cfg.eval_set.as_path(), eval.as_slice())];
    for plan in &plans {
        corpora.extend(plan.train_files.iter().map(|(p, s)| (p.as_path(), s.as_slice())));
        corpora.push((plan.dev_file.as_path(), plan.dev.as_slice()));
    }
    let layers = cfg.layers.layers();
    let cache = StoreCache::open(cfg, &corpora, &layers)?;
    let eval_name = cfg.eval_set.display().to_string();

    let mut tasks = Vec::new();
    for model in &cfg.models {
        let eval_store = cache.get(model, &cfg.eval_set);
        for plan in &plans {
            let train_stores: Vec<&EmbeddingStore> =
                plan.train_files.iter().map(|(p, _)| cache.get(model, p)).collect();
            let dev_stores = vec![cache.get(model, &plan.dev_file)];
            for &layer in &layers {
                for (i, split) in plan.samples.iter().enumerate() {
                    tasks.push(Task {
                        model,
                        layer,
                        label: sample_label(split, i, plan.samples.len()),
                        seed: split.sample_seed.unwrap_or(cfg.seed),
                        train: &split.sentences,
                        train_stores: train_stores.clone(),
                        dev: &plan.dev,
                        dev_stores: dev_stores.clone(),
                        eval: &eval,
                        eval_store,
                        eval_name: eval_name.clone(),
                    });
                }
            }
        }
    }
    log::info!("experiment 1: {} probes", tasks.len());
    let mut runs = run_tasks(&tasks, cfg)?.into_iter();

    let mut cells = Vec::new();
    for model in &cfg.models {
        for plan in &plans {
            for &layer in &layers {
                let runs: Vec<ProbeRun> = runs.by_ref().take(plan.samples.len()).collect();
                let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
                cells.push(CellResult {
                    model: model.clone(),
                    source: plan.provenance,
                    layer,
                    aggregate: eval::aggregate(&reports, cfg.std_kind)?,
                    runs,
                });
            }
        }
    }
    Ok(Experiment1Result {
        models: cfg.models.clone(),
        sources: plans.iter().map(|p| p.provenance).collect(),
        layers,
        baseline,
        cells,
    })
}

impl Experiment1Result {
    fn cell(&self, model: &str, source: Provenance, layer: u16) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.source == source && c.layer == layer)
    }

    /// Model-by-layer F1 table for one training source.
    pub fn grid(&self, source: Provenance) -> ReportGrid {
        let series = self
            .models
            .iter()
            .map(|m| Series {
                label: m.clone(),
                values: self
                    .layers
                    .iter()
                    .map(|&l| self.cell(m, source, l).map(|c| c.aggregate.overall.f1))
                    .collect(),
            })
            .collect();
        ReportGrid {
            row_header: "Model".into(),
            layers: self.layers.clone(),
            series,
            baseline: Some(self.baseline.overall.f1),
        }
    }

    /// Construction-by-layer F1 table for one model and source.
    pub fn construction_grid(&self, model: &str, source: Provenance) -> ReportGrid {
        let constructions: BTreeSet<ConstructionId> = self.baseline.per_construction.keys().copied().collect();
        let series = constructions
            .iter()
            .map(|k| Series {
                label: k.display_name().to_string(),
                values: self
                    .layers
                    .iter()
                    .map(|&l| {
                        self.cell(model, source, l)
                            .and_then(|c| c.aggregate.per_construction.get(k))
                            .map(|p| p.f1)
                    })
                    .collect(),
            })
            .collect();
        ReportGrid {
            row_header: "Construction".into(),
            layers: self.layers.clone(),
            series,
            baseline: Some(self.baseline.overall.f1),
        }
    }

    /// Best layer by mean F1 per model and source; ties go to the lower
    /// layer.
    pub fn top_layers(&self) -> Vec<TopLayer> {
        let mut out = Vec::new();
        for m in &self.models {
            for &s in &self.sources {
                let best = self
                    .layers
                    .iter()
                    .filter_map(|&l| self.cell(m, s, l))
                    .fold(None::<&CellResult>, |best, c| match best {
                        Some(b) if b.aggregate.overall.f1.mean >= c.aggregate.overall.f1.mean => Some(b),
                        _ => Some(c),
                    });
                if let Some(c) = best {
                    out.push(TopLayer {
                        model: m.clone(),
                        source: s,
                        layer: c.layer,
                        f1: c.aggregate.overall.f1,
                    });
                }
            }
        }
        out
    }
}

const FORMATS: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::PlotJson];

fn emit_all(grid: &ReportGrid, dir: &Path, stem: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    for f in FORMATS {
        let path = dir.join(format!("{stem}.{}", f.extension()));
        eval::emit_report(grid, f, &path)?;
        written.push(path);
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_top_layers(rows: &[TopLayer], baseline: f64, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let csv_path = dir.join("exp1_top_layers.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["model", "source", "layer", "f1_mean", "f1_std"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.source.to_string(),
            r.layer.to_string(),
            format!("{:.4}", r.f1.mean),
            format!("{:.4}", r.f1.std),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    written.push(csv_path);

    let md_path = dir.join("exp1_top_layers.md");
    let mut md = String::from("| Model | Source | Layer | F1 |\n|---|---|---:|---:|\n");
    for r in rows {
        md.push_str(&format!(
            "| {} | {} | {} | {:.4} ± {:.4} |\n",
            r.model, r.source, r.layer, r.f1.mean, r.f1.std
        ));
    }
    md.push_str(&format!("| verb-only | | | {baseline:.4} |\n"));
    std::fs::write(&md_path, md).map_err(|e| Error::io(&md_path, e))?;
    written.push(md_path);
    Ok(())
}

/// Writes layer tables per source, construction breakdowns per model and
/// source, the top-layer summary and the raw results.
pub fn write_experiment1(result: &Experiment1Result, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for &source in &result.sources {
        let tag = source.name().to_lowercase();
        emit_all(&result.grid(source), dir, &format!("exp1_{tag}"), &mut written)?;
        for m in &result.models {
            emit_all(
                &result.construction_grid(m, source),
                dir,
                &format!("exp1_{tag}_{m}_constructions"),
                &mut written,
            )?;
        }
    }
    write_top_layers(&result.top_layers(), result.baseline.overall.f1, dir, &mut written)?;
    let raw = dir.join("exp1_results.json");
    write_json(result, &raw)?;
    written.push(raw);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment2Cell {
    pub model: String,
    pub multiple: usize,
    pub size: usize,
    pub layer: u16,
    pub with_holdout_verbs: Vec<ProbeRun>,
    pub without_holdout_verbs: Vec<ProbeRun>,
    pub with_f1: MeanStd,
    pub without_f1: MeanStd,
    /// Pairwise with-minus-without F1, sample by sample.
    pub delta_f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment2Result {
    pub models: Vec<String>,
    pub multiples: Vec<usize>,
    pub layers: Vec<u16>,
    pub held_out: Vec<String>,
    pub eval_sentences: usize,
    pub pool_with: usize,
    pub pool_without: usize,
    pub baseline: EvalReport,
    pub cells: Vec<Experiment2Cell>,
}

pub fn experiment2(cfg: &ExperimentConfig) -> Result<Experiment2Result> {
    cfg.validate()?;
    let e2 = &cfg.experiment2;
    let pool_file = cfg.require(&cfg.corpora.wiked_pool, "wiked_pool", Provenance::Wiked)?;
    let dev_file = cfg.require(&cfg.corpora.wiked_dev, "wiked_dev", Provenance::Wiked)?;
    let raw_eval = load_corpus(&cfg.eval_set)?;
    let exceptions: BTreeSet<String> = e2.exceptions.iter().map(|s| s.to_lowercase()).collect();
    let held = held_out_verbs(e2, &raw_eval)?;
    let eval = mask_exceptions(&raw_eval, &exceptions);
    let baseline = eval::evaluate(&eval::verb_only_baseline(&eval)?, &eval)?;

    let pool = CorpusSplit::new(load_corpus(&pool_file)?, Provenance::Wiked);
    let dev = CorpusSplit::new(load_corpus(&dev_file)?, Provenance::Wiked);
    let pool_without = corpus::verb_holdout(&pool, &held, &exceptions);
    let dev_without = corpus::verb_holdout(&dev, &held, &exceptions);
    log::info!(
        "experiment 2: pool {} -> {} after holding out {} forms; dev {} -> {}",
        pool.len(),
        pool_without.len(),
        held.len(),
        dev.len(),
        dev_without.len()
    );

    let corpora: Vec<(&Path, &[AnnotatedSentence])> = vec![
        (cfg.eval_set.as_path(), raw_eval.as_slice()),
        (pool_file.as_path(), pool.sentences.as_slice()),
        (dev_file.as_path(), dev.sentences.as_slice()),
    ];
    let layers = e2.layers.layers();
    let cache = StoreCache::open(cfg, &corpora, &layers)?;

    let mut samples = Vec::new();
    for &m in &e2.sizes {
        let size = m * cfg.sample_size;
        let with = corpus::sample_training_sets(&pool, cfg.sample_count, size, cfg.seed)?;
        let without = corpus::sample_training_sets(&pool_without, cfg.sample_count, size, cfg.seed)
            .map_err(|e| match e {
                Error::InsufficientData { requested, available } => Error::InvalidInput(format!(
                    "verb-filtered pool has {available} sentences, {requested} requested for {m}x"
                )),
                other => other,
            })?;
        samples.push((m, size, with, without));
    }

    let eval_name = cfg.eval_set.display().to_string();
    let mut tasks = Vec::new();
    for model in &cfg.models {
        let pool_store = cache.get(model, &pool_file);
        let dev_store = cache.get(model, &dev_file);
        let eval_store = cache.get(model, &cfg.eval_set);
        for (m, _, with, without) in &samples {
            for &layer in &layers {
                for (variant, sets, dev_set) in [("with", with, &dev), ("without", without, &dev_without)] {
                    for (i, split) in sets.iter().enumerate() {
                        tasks.push(Task {
                            model,
                            layer,
                            label: format!("WIKED-{m}x-{variant}#{i}"),
                            seed: split.sample_seed.unwrap_or(cfg.seed),
                            train: &split.sentences,
                            train_stores: vec![pool_store],
                            dev: &dev_set.sentences,
                            dev_stores: vec![dev_store],
                            eval: &eval,
                            eval_store,
                            eval_name: eval_name.clone(),
                        });
                    }
                }
            }
        }
    }
    log::info!("experiment 2: {} probes", tasks.len());
    let mut runs = run_tasks(&tasks, cfg)?.into_iter();

    let k = cfg.sample_count;
    let mut cells = Vec::new();
    for model in &cfg.models {
        for (m, size, _, _) in &samples {
            for &layer in &layers {
                let with: Vec<ProbeRun> = runs.by_ref().take(k).collect();
                let without: Vec<ProbeRun> = runs.by_ref().take(k).collect();
                let f1s = |r: &[ProbeRun]| r.iter().map(|p| p.report.overall.f1).collect::<Vec<_>>();
                let (fw, fo) = (f1s(&with), f1s(&without));
                let deltas: Vec<f64> = fw.iter().zip(&fo).map(|(a, b)| a - b).collect();
                cells.push(Experiment2Cell {
                    model: model.clone(),
                    multiple: *m,
                    size: *size,
                    layer,
                    with_f1: stats::mean_std(&fw, cfg.std_kind),
                    without_f1: stats::mean_std(&fo, cfg.std_kind),
                    delta_f1: stats::mean_std(&deltas, cfg.std_kind),
                    with_holdout_verbs: with,
                    without_holdout_verbs: without,
                });
            }
        }
    }
    Ok(Experiment2Result {
        models: cfg.models.clone(),
        multiples: e2.sizes.clone(),
        layers,
        held_out: held.into_iter().collect(),
        eval_sentences: eval.len(),
        pool_with: pool.len(),
        pool_without: pool_without.len(),
        baseline,
        cells,
    })
}

impl Experiment2Result {
    fn series(&self, pick: impl Fn(&Experiment2Cell) -> Vec<(String, MeanStd)>) -> Vec<Series> {
        let mut rows: Vec<Series> = Vec::new();
        for model in &self.models {
            for &m in &self.multiples {
                let cells: Vec<&Experiment2Cell> = self
                    .cells
                    .iter()
                    .filter(|c| &c.model == model && c.multiple == m)
                    .collect();
                let Some(first) = cells.first() else { continue };
                for (j, (suffix, _)) in pick(first).into_iter().enumerate() {
                    let values = self
                        .layers
                        .iter()
                        .map(|&l| cells.iter().find(|c| c.layer == l).map(|c| pick(c)[j].1))
                        .collect();
                    rows.push(Series {
                        label: format!("{model} {m}x{suffix}"),
                        values,
                    });
                }
            }
        }
        rows
    }

    /// F1 with and without held-out verbs, per model and size.
    pub fn grid(&self) -> ReportGrid {
        ReportGrid {
            row_header: "Training set".into(),
            layers: self.layers.clone(),
            series: self.series(|c| {
                vec![
                    (" with".to_string(), c.with_f1),
                    (" without".to_string(), c.without_f1),
                ]
            }),
            baseline: Some(self.baseline.overall.f1),
        }
    }

    /// Mean and spread of pairwise with-minus-without differences.
    pub fn delta_grid(&self) -> ReportGrid {
        ReportGrid {
            row_header: "Training set".into(),
            layers: self.layers.clone(),
            series: self.series(|c| vec![(String::new(), c.delta_f1)]),
            baseline: None,
        }
    }
}

pub fn write_experiment2(result: &Experiment2Result, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    emit_all(&result.grid(), dir, "exp2", &mut written)?;
    emit_all(&result.delta_grid(), dir, "exp2_delta", &mut written)?;
    let raw = dir.join("exp2_results.json");
    write_json(result, &raw)?;
    written.push(raw);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentence::Label;

    fn sent(id: &str, text: &str, err: Option<usize>, verbs: &[usize]) -> AnnotatedSentence {
        let tokens: Vec<String> = text.split(' ').map(String::from).collect();
        let mut s = AnnotatedSentence::grammatical(id, tokens);
        if let Some(i) = err {
            s.labels[i] = Label::sva();
        }
        s.verb_positions = Some(verbs.iter().copied().collect());
        s
    }

    #[test]
    fn be_only_sentences_dropped_and_be_masked() {
        let exc = corpus::be_forms();
        let eval = vec![
            sent("a", "The author is here .", None, &[2]),
            sent("b", "The author that is tall laughs .", Some(5), &[3, 5]),
            sent("c", "The author laugh .", Some(2), &[2]),
        ];
        let out = mask_exceptions(&eval, &exc);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].id, "b");
        assert_eq!(out[0].eval_mask, Some([3].into_iter().collect()));
        assert_eq!(out[1].eval_mask, None);
    }

    #[test]
    fn held_out_verbs_from_eval_errors() {
        let eval = vec![sent("u", "The author laugh .", Some(2), &[2]), sent("v", "The authors is .", Some(2), &[2])];
        let held = held_out_verbs(&Experiment2Config::default(), &eval).unwrap();
        assert!(held.contains("laughs") && held.contains("laughed") && held.contains("laugh"));
        assert!(held.contains("is"));
    }

    #[test]
    fn store_path_layout() {
        let p = store_path(Path::new("/s"), "bert", Path::new("/data/ml_eval.jsonl"));
        assert_eq!(p, Path::new("/s/bert/ml_eval.gede"));
    }

    #[test]
    fn missing_store_names_extract_command() {
        let dir = tempfile::tempdir().unwrap();
        let err = open_store(dir.path(), "gpt2", Path::new("corpus/wi.jsonl")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gedprobe extract --model gpt2 --corpus corpus/wi.jsonl"), "{msg}");
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"models":["bert"],"eval_set":"ml.jsonl"}"#).unwrap();
        assert_eq!(cfg.sample_count, 5);
        assert_eq!(cfg.sample_size, 1936);
        assert_eq!(cfg.layers.layers(), (1..=12).collect::<Vec<_>>());
        assert_eq!(cfg.experiment2.layers.layers(), (6..=12).collect::<Vec<_>>());
        let sizes: Vec<usize> = cfg.experiment2.sizes.iter().map(|m| m * cfg.sample_size).collect();
        assert_eq!(sizes, [1936, 7744, 15488]);
        cfg.validate().unwrap();

        let mut bad = cfg.clone();
        bad.corpora.wiked_dev = Some(PathBuf::from("ml.jsonl"));
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.layers = LayerRange::new(0, 12);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"models":["m"],"eval_set":"ml.jsonl","corpora":{"wiked_pool":"/abs/pool.jsonl"}}"#)
            .unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.eval_set, dir.path().join("ml.jsonl"));
        assert_eq!(cfg.corpora.wiked_pool, Some(PathBuf::from("/abs/pool.jsonl")));
        assert_eq!(cfg.stores_dir, dir.path().join("stores"));
    }
}

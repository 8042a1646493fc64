//! Token-level scoring.
//!
//! The positive class is "ungrammatical token". Scores are micro-averaged
//! over unmasked tokens, overall and per construction.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sentence::{AnnotatedSentence, ConstructionId};
use crate::stats::{self, MeanStd, StdKind};

pub use report::{emit_report, parse_csv, render_report, ReportFormat, ReportGrid, Series};

/// Binary predictions per sentence id, one entry per token.
pub type Predictions = BTreeMap<String, Vec<bool>>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// A slice with no gold errors and no predicted errors is scored 1.0
    /// (nothing to find, nothing wrongly flagged). Otherwise zero
    /// denominators give 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (precision, recall, f1) = if tp + fp + fn_ == 0 {
            (1.0, 1.0, 1.0)
        } else {
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let p = ratio(tp, tp + fp);
            let r = ratio(tp, tp + fn_);
            // equals 2PR/(P+R) without the intermediate rounding
            let f = ratio(2 * tp, 2 * tp + fp + fn_);
            (p, r, f)
        };
        Prf {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }

    fn add(&mut self, other: &Counts) {
        *self = Prf::from_counts(
            self.true_positives + other.tp,
            self.false_positives + other.fp,
            self.false_negatives + other.fn_,
        );
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn count(pred: &[bool], gold: &[bool], mask: Option<&BTreeSet<usize>>) -> Counts {
    let mut c = Counts::default();
    for (i, (&p, &g)) in pred.iter().zip(gold).enumerate() {
        if mask.is_some_and(|m| m.contains(&i)) {
            continue;
        }
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

pub fn f1_score(pred: &[bool], gold: &[bool], mask: Option<&BTreeSet<usize>>) -> Result<Prf> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if let Some(&i) = mask.and_then(|m| m.iter().next_back()) {
        if i >= gold.len() {
            return Err(Error::InvalidInput(format!("mask index {i} out of range")));
        }
    }
    let c = count(pred, gold, mask);
    Ok(Prf::from_counts(c.tp, c.fp, c.fn_))
}

/// Predicts every verb position as ungrammatical.
pub fn verb_only_baseline(sentences: &[AnnotatedSentence]) -> Result<Predictions> {
    sentences
        .iter()
        .map(|s| {
            let verbs = s
                .verb_positions
                .as_ref()
                .ok_or_else(|| Error::MissingVerbPositions(s.id.clone()))?;
            let pred = (0..s.len()).map(|i| verbs.contains(&i)).collect();
            Ok((s.id.clone(), pred))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalProvenance {
    pub probe: String,
    pub eval_set: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Prf,
    /// Sentences without a construction count toward `overall` only.
    pub per_construction: BTreeMap<ConstructionId, Prf>,
    #[serde(default)]
    pub provenance: EvalProvenance,
}

pub fn evaluate(predictions: &Predictions, eval_set: &[AnnotatedSentence]) -> Result<EvalReport> {
    let missing: Vec<String> = eval_set
        .iter()
        .filter(|s| !predictions.contains_key(&s.id))
        .map(|s| s.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::CoverageGap(missing));
    }
    let mut overall = Prf::from_counts(0, 0, 0);
    let mut per_construction: BTreeMap<ConstructionId, Prf> = BTreeMap::new();
    for s in eval_set {
        let pred = &predictions[&s.id];
        if pred.len() != s.len() {
            return Err(Error::LengthMismatch(format!(
                "sentence `{}`: {} predictions for {} tokens",
                s.id,
                pred.len(),
                s.len()
            )));
        }
        let c = count(pred, &s.gold(), s.eval_mask.as_ref());
        overall.add(&c);
        if let Some(construction) = s.construction {
            per_construction
                .entry(construction)
                .or_insert_with(|| Prf::from_counts(0, 0, 0))
                .add(&c);
        }
    }
    Ok(EvalReport {
        overall,
        per_construction,
        provenance: EvalProvenance::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfStats {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

impl PrfStats {
    fn of(cells: &[&Prf], kind: StdKind) -> Self {
        let col = |f: fn(&Prf) -> f64| {
            let v: Vec<f64> = cells.iter().map(|p| f(p)).collect();
            stats::mean_std(&v, kind)
        };
        PrfStats {
            precision: col(|p| p.precision),
            recall: col(|p| p.recall),
            f1: col(|p| p.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub samples: usize,
    pub overall: PrfStats,
    pub per_construction: BTreeMap<ConstructionId, PrfStats>,
}

/// Per-cell mean and standard deviation across reports.
pub fn aggregate(reports: &[EvalReport], kind: StdKind) -> Result<AggregateReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidInput("no reports to aggregate".into()))?;
    let keys: Vec<ConstructionId> = first.per_construction.keys().copied().collect();
    for (i, r) in reports.iter().enumerate() {
        if !r.per_construction.keys().copied().eq(keys.iter().copied()) {
            return Err(Error::Heterogeneous(format!(
                "report {i} has constructions {:?}, expected {:?}",
                r.per_construction.keys().collect::<Vec<_>>(),
                keys
            )));
        }
    }
    let overall: Vec<&Prf> = reports.iter().map(|r| &r.overall).collect();
    let per_construction = keys
        .iter()
        .map(|k| {
            let cells: Vec<&Prf> = reports.iter().map(|r| &r.per_construction[k]).collect();
            (*k, PrfStats::of(&cells, kind))
        })
        .collect();
    Ok(AggregateReport {
        samples: reports.len(),
        overall: PrfStats::of(&overall, kind),
        per_construction,
    })
}

/// Area under the ROC curve via the rank-sum statistic (ties averaged).
/// Returns 0.5 when either class is empty.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    (rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64
}

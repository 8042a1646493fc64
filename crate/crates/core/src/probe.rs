//! Binary logistic probes over word vectors.
//!
//! A probe scores a vector `x` as `σ(w·x + b)`; tokens scoring at or above
//! the threshold are predicted ungrammatical. Training minimises mean binary
//! cross-entropy plus `(λ/2)‖w‖²` with fixed-step mini-batch gradient descent
//! and early stopping on a dev set. Vectors are stored as `f32`; all
//! arithmetic is `f64`.

use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Prf;

/// Row-major feature matrix with one binary label per row (true = error).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledVectors {
    dim: usize,
    features: Vec<f32>,
    labels: Vec<bool>,
}

impl LabeledVectors {
    pub fn new(dim: usize) -> Self {
        LabeledVectors {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_parts(dim: usize, features: Vec<f32>, labels: Vec<bool>) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: features.len(),
            });
        }
        Ok(LabeledVectors { dim, features, labels })
    }

    pub fn push(&mut self, row: &[f32], label: bool) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainProvenance {
    pub corpus: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub model: String,
    pub layer: u16,
    pub d: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_provenance: TrainProvenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<bool>,
    pub probabilities: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LinearProbe {
    pub fn zeros(d: usize) -> Self {
        LinearProbe {
            model: String::new(),
            layer: 0,
            d,
            weights: vec![0.0; d],
            bias: 0.0,
            train_provenance: TrainProvenance::default(),
        }
    }

    pub fn logit(&self, x: &[f32]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .map(|(w, &v)| w * v as f64)
            .sum::<f64>()
            + self.bias
    }

    pub fn probability(&self, x: &[f32]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Scores consecutive rows of `rows`, each `d` wide.
    pub fn predict(&self, rows: &[f32], threshold: f64) -> Result<Prediction> {
        if self.d == 0 || !rows.len().is_multiple_of(self.d) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: rows.len(),
            });
        }
        let probabilities: Vec<f64> = rows.chunks_exact(self.d).map(|x| self.probability(x)).collect();
        let labels = probabilities.iter().map(|&p| p >= threshold).collect();
        Ok(Prediction { labels, probabilities })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let probe: LinearProbe = serde_json::from_reader(file)?;
        if probe.weights.len() != probe.d {
            return Err(Error::DimensionMismatch {
                expected: probe.d,
                actual: probe.weights.len(),
            });
        }
        Ok(probe)
    }
}

/// Mean cross-entropy plus `(λ/2)‖w‖²` over `batch`, and its gradient with
/// respect to `(w, b)`; the bias gradient is the last element.
pub fn loss_and_grad(probe: &LinearProbe, batch: &LabeledVectors, l2: f64) -> (f64, Vec<f64>) {
    let indices: Vec<usize> = (0..batch.len()).collect();
    loss_grad_on(&probe.weights, probe.bias, l2, batch, &indices)
}

fn loss_grad_on(w: &[f64], b: f64, l2: f64, data: &LabeledVectors, indices: &[usize]) -> (f64, Vec<f64>) {
    let d = w.len();
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for &i in indices {
        let x = data.row(i);
        let z: f64 = w.iter().zip(x).map(|(w, &v)| w * v as f64).sum::<f64>() + b;
        let y = if data.labels[i] { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, &v) in grad[..d].iter_mut().zip(x) {
            *g += r * v as f64;
        }
        grad[d] += r;
    }
    let n = indices.len().max(1) as f64;
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    loss += 0.5 * l2 * norm2;
    for (g, wk) in grad[..d].iter_mut().zip(w) {
        *g += l2 * wk;
    }
    (loss, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingMetric {
    #[default]
    DevF1,
    DevLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub l2_penalty: f64,
    pub stopping_metric: StoppingMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 50,
            patience: 10,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
            l2_penalty: 1e-4,
            stopping_metric: StoppingMetric::DevF1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience >= self.max_epochs {
            return Err(Error::InvalidInput(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be positive".into()));
        }
        if self.l2_penalty < 0.0 {
            return Err(Error::InvalidInput("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub probe: LinearProbe,
    pub trace: Vec<EpochRecord>,
    /// Training data held a single class.
    pub degenerate: bool,
}

fn dev_f1(w: &[f64], b: f64, dev: &LabeledVectors) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..dev.len() {
        let z: f64 = w.iter().zip(dev.row(i)).map(|(w, &v)| w * v as f64).sum::<f64>() + b;
        match (sigmoid(z) >= 0.5, dev.labels[i]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Prf::from_counts(tp, fp, fn_).f1
}

/// Trains a probe with early stopping, restoring the best-epoch parameters.
/// Deterministic for a fixed `cfg.seed`.
pub fn train(train: &LabeledVectors, dev: &LabeledVectors, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let d = train.dim();
    if dev.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: dev.dim(),
        });
    }
    if dev.is_empty() {
        return Err(Error::InvalidInput("dev set is empty".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let positives = train.positives();
    let degenerate = positives == 0 || positives == train.len();
    if degenerate {
        log::warn!(
            "training data holds a single class ({positives} of {} positive); expect a bias-only probe",
            train.len()
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let all_train = order.clone();
    let all_dev: Vec<usize> = (0..dev.len()).collect();

    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>, f64)> = None;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = loss_grad_on(&w, b, cfg.l2_penalty, train, batch);
            for (wk, g) in w.iter_mut().zip(&grad) {
                *wk -= cfg.learning_rate * g;
            }
            b -= cfg.learning_rate * grad[d];
        }
        let (train_loss, _) = loss_grad_on(&w, b, cfg.l2_penalty, train, &all_train);
        let (dev_loss, _) = loss_grad_on(&w, b, cfg.l2_penalty, dev, &all_dev);
        let f1 = dev_f1(&w, b, dev);
        trace.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            dev_f1: f1,
        });
        // higher is better for both keys
        let score = match cfg.stopping_metric {
            StoppingMetric::DevF1 => f1,
            StoppingMetric::DevLoss => -dev_loss,
        };
        if best.as_ref().is_none_or(|(s, ..)| score > *s) {
            best = Some((score, epoch, w.clone(), b));
        }
        let best_epoch = best.as_ref().map_or(epoch, |(_, e, ..)| *e);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, weights, bias) = best.expect("max_epochs > patience >= 0 guarantees one epoch");
    Ok(TrainOutcome {
        probe: LinearProbe {
            model: String::new(),
            layer: 0,
            d,
            weights,
            bias,
            train_provenance: TrainProvenance {
                corpus: String::new(),
                seed: cfg.seed,
                epochs_run: trace.len(),
                best_epoch,
            },
        },
        trace,
        degenerate,
    })
}

//! Small descriptive-statistics helpers.

use serde::{Deserialize, Serialize};

/// Denominator used for the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    /// n − 1 denominator. Zero for fewer than two observations.
    #[default]
    Sample,
    /// n denominator.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64], kind: StdKind) -> f64 {
    let n = values.len();
    let denom = match kind {
        StdKind::Sample if n < 2 => return 0.0,
        StdKind::Sample => (n - 1) as f64,
        StdKind::Population if n == 0 => return 0.0,
        StdKind::Population => n as f64,
    };
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / denom).sqrt()
}

pub fn mean_std(values: &[f64], kind: StdKind) -> MeanStd {
    MeanStd {
        mean: mean(values),
        std: std_dev(values, kind),
    }
}

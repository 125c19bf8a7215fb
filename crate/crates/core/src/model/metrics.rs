use serde::{Deserialize, Serialize};

use super::train::Prediction;
use crate::error::{Error, Result};

/// Confusion counts with fake as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy and per-class precision/recall/F1. Ratios with a zero
/// denominator are reported as 0.0 and named in `zero_division`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub fake: ClassMetrics,
    pub real: ClassMetrics,
    pub confusion: Confusion,
    pub zero_division: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class(tp: usize, fp: usize, fn_: usize, prefix: &str, flags: &mut Vec<String>) -> ClassMetrics {
    let precision = ratio(tp, tp + fp, &format!("{prefix}.precision"), flags);
    let recall = ratio(tp, tp + fn_, &format!("{prefix}.recall"), flags);
    let f1 = if precision + recall == 0.0 {
        flags.push(format!("{prefix}.f1"));
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        precision,
        recall,
        f1,
    }
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Result<Self> {
        if c.total() == 0 {
            return Err(Error::Evaluation("no examples to evaluate".into()));
        }
        let mut flags = Vec::new();
        let fake = class(c.tp, c.fp, c.fn_, "fake", &mut flags);
        let real = class(c.tn, c.fn_, c.fp, "real", &mut flags);
        Ok(Self {
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
            fake,
            real,
            confusion: c,
            zero_division: flags,
        })
    }
}

pub fn metrics_from_predictions(preds: &[Prediction]) -> Result<MetricsReport> {
    let mut c = Confusion::default();
    for p in preds {
        match (p.predicted, p.label) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    MetricsReport::from_confusion(c)
}

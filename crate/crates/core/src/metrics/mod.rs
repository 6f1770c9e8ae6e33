//! Classification metrics, ROC curves and report files.
//!
//! Multi-class results are reduced one-vs-rest: for class `k`, `TP` is the
//! diagonal cell, `FP` the rest of column `k`, `FN` the rest of row `k`, and
//! `TN` everything else. Ratios with a zero denominator are reported as 0.

mod report;
mod roc;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nn::{argmax, forward, softmax, Mode, ModelParameters, ModelSpec, Tensor};

pub use report::{emit_report, read_round_metrics, ClusterMetricsRow, Report, RoundMetricsRow, REPORT_FILES};
pub use roc::{mann_whitney_auc, roc, RocCurve, RocPoint};

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.num_classes).map(|k| self.counts[k][k]).sum()
    }

    /// `(tp, fp, fn, tn)` for class `k` against the rest.
    pub fn one_vs_rest(&self, k: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[k][k];
        let fp = (0..self.num_classes).map(|t| self.counts[t][k]).sum::<u64>() - tp;
        let fn_ = self.counts[k].iter().sum::<u64>() - tp;
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }

    /// Row-major counts joined by `;`, as stored in report files.
    pub fn encode(&self) -> String {
        self.counts
            .iter()
            .flatten()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn decode(text: &str, num_classes: usize) -> Result<Self> {
        let flat = text
            .split(';')
            .map(|t| t.parse::<u64>().map_err(|e| Error::validation(format!("confusion cell '{t}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if flat.len() != num_classes * num_classes {
            return Err(Error::validation(format!(
                "{} confusion cells for {num_classes} classes",
                flat.len()
            )));
        }
        Ok(Self {
            num_classes,
            counts: flat.chunks(num_classes).map(<[u64]>::to_vec).collect(),
        })
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::validation(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::validation(format!("label pair ({t}, {p}) out of range for {num_classes} classes")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { num_classes, counts })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// The six rates for one class (or their macro average).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tpr: f64,
    pub fpr: f64,
}

impl ClassMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
            precision,
            recall,
            f1,
            tpr: recall,
            fpr: ratio(fp, fp + tn),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Diagonal share of the whole matrix.
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean of `per_class`.
    pub macro_avg: ClassMetrics,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsSummary> {
    if cm.total() == 0 {
        return Err(Error::validation("metrics of an empty confusion matrix"));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.num_classes)
        .map(|k| {
            let (tp, fp, fn_, tn) = cm.one_vs_rest(k);
            ClassMetrics::from_counts(tp, fp, fn_, tn)
        })
        .collect();
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    let macro_avg = ClassMetrics {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        tpr: mean(|m| m.tpr),
        fpr: mean(|m| m.fpr),
    };
    Ok(MetricsSummary {
        accuracy: ratio(cm.correct(), cm.total()),
        per_class,
        macro_avg,
    })
}

/// Predictions, scores and metrics of one model on one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub summary: MetricsSummary,
    /// SoftMax probabilities, `[rows, classes]`.
    pub scores: Tensor,
    pub labels: Vec<usize>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        self.summary.accuracy
    }

    /// Scores of class `k` for every row.
    pub fn class_scores(&self, k: usize) -> Vec<f64> {
        (0..self.scores.rows()).map(|i| self.scores.row(i)[k]).collect()
    }
}

pub fn evaluate(spec: &ModelSpec, params: &ModelParameters, data: &FeatureMatrix) -> Result<Evaluation> {
    let logits = forward(spec, params, &data.x, Mode::Eval)?;
    let predicted: Vec<usize> = (0..logits.rows()).map(|i| argmax(logits.row(i))).collect();
    let confusion = confusion(&data.y, &predicted, data.num_classes)?;
    Ok(Evaluation {
        summary: metrics(&confusion)?,
        confusion,
        scores: softmax(&logits)?,
        labels: data.y.clone(),
    })
}

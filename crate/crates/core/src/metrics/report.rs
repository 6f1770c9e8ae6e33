//! Plot-ready report files.
//!
//! | file                  | contents                                             |
//! |-----------------------|------------------------------------------------------|
//! | `metrics_rounds.csv`  | global test metrics after each round, with the raw confusion counts |
//! | `confusion.csv`       | final confusion matrix, rows = true class            |
//! | `roc_class_<k>.csv`   | one-vs-rest ROC points of class `k`                  |
//! | `cluster_metrics.csv` | accuracy of each cluster model on global and cluster-local test data |
//! | `timing.csv`          | simulated timing breakdown per cluster               |
//! | `timing.json`         | the same timing report as a structured document      |
//! | `run_manifest.json`   | config echo, seeds, versions, checksums, AUCs        |
//!
//! Nothing time-dependent is written, so re-running with the same inputs
//! yields byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, Evaluation, RocCurve};
use crate::error::{Error, Result};
use crate::latency::{csv_io, TimingReport};

pub const REPORT_FILES: [&str; 6] = [
    "metrics_rounds.csv",
    "confusion.csv",
    "cluster_metrics.csv",
    "timing.csv",
    "timing.json",
    "run_manifest.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetricsRow {
    pub round: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_fpr: f64,
    pub mean_train_loss: f64,
    /// Row-major counts joined by `;`.
    pub confusion: String,
}

impl RoundMetricsRow {
    pub fn new(round: u64, eval: &Evaluation, mean_train_loss: f64) -> Self {
        let m = &eval.summary.macro_avg;
        Self {
            round,
            accuracy: eval.summary.accuracy,
            macro_precision: m.precision,
            macro_recall: m.recall,
            macro_f1: m.f1,
            macro_fpr: m.fpr,
            mean_train_loss,
            confusion: eval.confusion.encode(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetricsRow {
    pub cluster_id: usize,
    /// `global` (whole test set) or `local` (the cluster's share of it).
    pub scope: String,
    pub samples: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Everything [`emit_report`] writes.
#[derive(Debug, Clone)]
pub struct Report {
    pub rounds: Vec<RoundMetricsRow>,
    pub confusion: ConfusionMatrix,
    pub class_names: Vec<String>,
    pub roc: Vec<RocCurve>,
    pub clusters: Vec<ClusterMetricsRow>,
    pub timing: TimingReport,
    /// Free-form manifest; `roc_auc` is added on emission.
    pub manifest: serde_json::Value,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    for r in rows {
        w.serialize(r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all report files into `dir` (created if needed) and returns the
/// paths written.
pub fn emit_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("metrics_rounds.csv");
    write_rows(&path, &report.rounds)?;
    written.push(path);

    let path = dir.join("confusion.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_io)?;
    let k = report.confusion.num_classes;
    let mut header = vec!["true_class".to_owned()];
    header.extend((0..k).map(|p| format!("pred_{}", name(&report.class_names, p))));
    w.write_record(&header).map_err(csv_io)?;
    for (t, row) in report.confusion.counts.iter().enumerate() {
        let mut rec = vec![name(&report.class_names, t)];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    written.push(path);

    for curve in &report.roc {
        let path = dir.join(format!("roc_class_{}.csv", curve.class));
        write_rows(&path, &curve.points)?;
        written.push(path);
    }

    let path = dir.join("cluster_metrics.csv");
    write_rows(&path, &report.clusters)?;
    written.push(path);

    let path = dir.join("timing.csv");
    report.timing.write_csv(fs::File::create(&path)?)?;
    written.push(path);

    let path = dir.join("timing.json");
    fs::write(&path, report.timing.to_json() + "\n")?;
    written.push(path);

    let mut manifest = report.manifest.clone();
    if let serde_json::Value::Object(map) = &mut manifest {
        let aucs: serde_json::Map<String, serde_json::Value> = report
            .roc
            .iter()
            .map(|c| (c.class.to_string(), serde_json::json!(c.auc)))
            .collect();
        map.insert("roc_auc".into(), serde_json::Value::Object(aucs));
    }
    let path = dir.join("run_manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.into()))? + "\n")?;
    written.push(path);
    Ok(written)
}

fn name(names: &[String], k: usize) -> String {
    names.get(k).cloned().unwrap_or_else(|| k.to_string())
}

/// Reads `metrics_rounds.csv` back.
pub fn read_round_metrics(path: &Path) -> Result<Vec<RoundMetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_io)?;
    r.deserialize().map(|row| row.map_err(csv_io)).collect()
}

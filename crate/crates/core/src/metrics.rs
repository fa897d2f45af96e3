//! Evaluation metrics: accuracy, AUC, KS, per-class precision/recall/f1,
//! and mean ± population std aggregation over runs.
//!
//! Class 1 (default) is the positive class. Every ratio with a zero
//! denominator is 0.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(labels: &[u8], preds: &[u8]) -> Confusion {
    assert_eq!(labels.len(), preds.len(), "label/prediction length mismatch");
    let mut c = Confusion::default();
    for (&y, &p) in labels.iter().zip(preds) {
        match (y == 1, p == 1) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

/// `(precision, recall, f1)` treating `positive_class` as positive.
pub fn precision_recall_f1(conf: &Confusion, positive_class: u8) -> (f64, f64, f64) {
    let (tp, fp, fn_) = if positive_class == 1 {
        (conf.tp, conf.fp, conf.fn_)
    } else {
        (conf.tn, conf.fn_, conf.fp)
    };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Label 1 iff `score >= threshold`.
pub fn threshold_labels(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

/// Rank-based AUC with tied pairs counting one half. A single-class label
/// vector yields 0.5.
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum keeps tie midranks integral
    let mut rank2_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        rank2_sum += mid2 * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        i = j + 1;
    }
    let np = n_pos as u64;
    let u2 = rank2_sum - np * (np + 1);
    u2 as f64 / (2 * n_pos * n_neg) as f64
}

/// `max(TPR - FPR)` over every threshold `t`, predicting positive iff
/// `score >= t`, including the threshold above all scores.
pub fn ks(scores: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        best = best.max(ratio(tp, n_pos) - ratio(fp, n_neg));
    }
    best
}

/// One evaluated run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub auc: f64,
    pub ks: f64,
    pub precision_0: f64,
    pub recall_0: f64,
    pub f1_0: f64,
    pub precision_1: f64,
    pub recall_1: f64,
    pub f1_1: f64,
    /// Epochs run before stopping; 0 for non-iterative models.
    pub epochs: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl MetricsReport {
    pub const FIELDS: [&'static str; 11] = [
        "acc",
        "auc",
        "ks",
        "precision_0",
        "recall_0",
        "f1_0",
        "precision_1",
        "recall_1",
        "f1_1",
        "epochs",
        "best_epoch",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.acc,
            self.auc,
            self.ks,
            self.precision_0,
            self.recall_0,
            self.f1_0,
            self.precision_1,
            self.recall_1,
            self.f1_1,
            self.epochs as f64,
            self.best_epoch as f64,
        ]
    }

    pub fn csv_header() -> String {
        format!("seed,{}", Self::FIELDS.join(","))
    }

    pub fn csv_row(&self, seed: u64) -> String {
        let mut row = seed.to_string();
        for v in self.values() {
            row.push(',');
            row.push_str(&v.to_string());
        }
        row
    }

    pub fn with_epochs(mut self, epochs: usize, best_epoch: usize) -> Self {
        self.epochs = epochs;
        self.best_epoch = best_epoch;
        self
    }
}

/// Scores are default probabilities; labels are thresholded at `threshold`.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> MetricsReport {
    evaluate_labels(scores, labels, &threshold_labels(scores, threshold))
}

/// Ranking metrics from `scores`, the rest from the predicted labels.
pub fn evaluate_labels(scores: &[f64], labels: &[u8], preds: &[u8]) -> MetricsReport {
    let c = confusion(labels, preds);
    let (p0, r0, f0) = precision_recall_f1(&c, 0);
    let (p1, r1, f1) = precision_recall_f1(&c, 1);
    MetricsReport {
        acc: c.accuracy(),
        auc: auc(scores, labels),
        ks: ks(scores, labels),
        precision_0: p0,
        recall_0: r0,
        f1_0: f0,
        precision_1: p1,
        recall_1: r1,
        f1_1: f1,
        epochs: 0,
        best_epoch: 0,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(2);
        write!(f, "{:.p$}±{:.p$}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub acc: MeanStd,
    pub auc: MeanStd,
    pub ks: MeanStd,
    pub precision_0: MeanStd,
    pub recall_0: MeanStd,
    pub f1_0: MeanStd,
    pub precision_1: MeanStd,
    pub recall_1: MeanStd,
    pub f1_1: MeanStd,
    pub epochs: MeanStd,
    pub best_epoch: MeanStd,
}

impl Aggregate {
    pub fn fields(&self) -> [(&'static str, MeanStd); 11] {
        [
            ("acc", self.acc),
            ("auc", self.auc),
            ("ks", self.ks),
            ("precision_0", self.precision_0),
            ("recall_0", self.recall_0),
            ("f1_0", self.f1_0),
            ("precision_1", self.precision_1),
            ("recall_1", self.recall_1),
            ("f1_1", self.f1_1),
            ("epochs", self.epochs),
            ("best_epoch", self.best_epoch),
        ]
    }
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::Empty("metrics reports"));
    }
    let col = |i: usize| MeanStd::of(&reports.iter().map(|r| r.values()[i]).collect::<Vec<_>>());
    Ok(Aggregate {
        runs: reports.len(),
        acc: col(0),
        auc: col(1),
        ks: col(2),
        precision_0: col(3),
        recall_0: col(4),
        f1_0: col(5),
        precision_1: col(6),
        recall_1: col(7),
        f1_1: col(8),
        epochs: col(9),
        best_epoch: col(10),
    })
}

/// Header plus one row per `(seed, report)`.
pub fn write_csv<W: Write>(mut out: W, rows: &[(u64, MetricsReport)]) -> std::io::Result<()> {
    writeln!(out, "{}", MetricsReport::csv_header())?;
    for (seed, r) in rows {
        writeln!(out, "{}", r.csv_row(*seed))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_hand_count() {
        let c = confusion(&[1, 1, 0, 0], &[1, 0, 1, 0]);
        assert_eq!(c, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        let c = confusion(&[1, 0, 1], &[0, 0, 0]);
        assert_eq!((c.tp, c.fp), (0, 0));
        assert_eq!(precision_recall_f1(&c, 1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_values() {
        let c = Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 };
        assert_eq!(precision_recall_f1(&c, 1), (0.5, 0.5, 0.5));
        let c = Confusion { tp: 0, fp: 3, tn: 2, fn_: 4 };
        assert_eq!(precision_recall_f1(&c, 1).0, 0.0);
        // precision 0.60, recall 0.55
        let c = Confusion { tp: 33, fp: 22, tn: 0, fn_: 27 };
        let (p, r, f) = precision_recall_f1(&c, 1);
        assert!((p - 0.60).abs() < 1e-12);
        assert!((r - 0.55).abs() < 1e-12);
        assert!((f - 0.574).abs() < 1e-3);
    }

    #[test]
    fn auc_and_ks_reference() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [0, 0, 1, 1];
        assert_eq!(auc(&s, &y), 0.75);
        assert_eq!(ks(&s, &y), 0.5);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &y), 1.0);
        assert_eq!(ks(&[0.1, 0.2, 0.8, 0.9], &y), 1.0);
        assert_eq!(auc(&[0.3; 4], &y), 0.5);
        assert_eq!(ks(&[0.3; 4], &y), 0.0);
    }

    #[test]
    fn boundary_threshold_is_positive() {
        assert_eq!(threshold_labels(&[0.5, 0.4999], 0.5), vec![1, 0]);
    }

    #[test]
    fn aggregate_population_std() {
        let r = |v: f64| MetricsReport { acc: v, ..Default::default() };
        let a = aggregate(&[r(0.4), r(0.6)]).unwrap();
        assert!((a.acc.mean - 0.5).abs() < 1e-12);
        assert!((a.acc.std - 0.1).abs() < 1e-12);
        let a = aggregate(&[r(0.7)]).unwrap();
        assert_eq!(a.acc.std, 0.0);
        assert!(aggregate(&[]).is_err());
        assert_eq!(format!("{}", a.acc), "0.70±0.00");
    }

    #[test]
    fn csv_row_shape() {
        let r = evaluate(&[0.9, 0.1], &[1, 0], 0.5).with_epochs(3, 1);
        let row = r.csv_row(7);
        assert_eq!(row.split(',').count(), MetricsReport::csv_header().split(',').count());
        assert!(row.starts_with("7,1,1,1,"));
    }
}

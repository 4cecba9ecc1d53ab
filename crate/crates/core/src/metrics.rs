//! Confusion matrices, per-class precision/recall/F1, accuracy, macro and
//! weighted F1, and the learning-curve report surface.
//!
//! All metric values live on the [0, 1] scale internally; report rendering
//! multiplies by 100 and rounds half away from zero to one decimal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// 3x3 counts; rows are true labels, columns predicted labels, both in
/// canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[usize; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn count(&self, gold: Label, pred: Label) -> usize {
        self.counts[gold.index()][pred.index()]
    }

    pub fn counts(&self) -> &[[usize; 3]; 3] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, label: Label) -> usize {
        self.counts[label.index()].iter().sum()
    }

    pub fn supports(&self) -> [usize; 3] {
        [
            self.support(Label::Conflict),
            self.support(Label::Duplicate),
            self.support(Label::Neutral),
        ]
    }
}

/// Counts predictions against golds by (gold, predicted).
pub fn confusion(preds: &[Label], golds: &[Label]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = [[0usize; 3]; 3];
    for (pred, gold) in preds.iter().zip(golds) {
        counts[gold.index()][pred.index()] += 1;
    }
    Ok(ConfusionMatrix::from_counts(counts))
}

/// Precision, recall, and F1 of one class. A 0/0 ratio is defined as 0 and
/// flags the class as degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

/// Per-class precision/recall/F1 in canonical label order.
pub fn per_class_prf(cm: &ConfusionMatrix) -> [ClassPrf; 3] {
    let counts = cm.counts();
    std::array::from_fn(|i| {
        let tp = counts[i][i];
        let row: usize = counts[i].iter().sum();
        let col: usize = counts.iter().map(|r| r[i]).sum();
        let mut degenerate = false;
        let precision = if col == 0 {
            degenerate = true;
            0.0
        } else {
            tp as f64 / col as f64
        };
        let recall = if row == 0 {
            degenerate = true;
            0.0
        } else {
            tp as f64 / row as f64
        };
        let f1 = if precision + recall == 0.0 {
            if tp == 0 && (col == 0 || row == 0) {
                degenerate = true;
            }
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassPrf {
            precision,
            recall,
            f1,
            degenerate,
        }
    })
}

/// The full per-split report: accuracy, per-class PRF, macro and weighted F1,
/// and class supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: [ClassPrf; 3],
    pub support: [usize; 3],
}

impl MetricReport {
    /// Arithmetic mean of several reports over the same evaluation split.
    pub fn mean<'a>(reports: impl IntoIterator<Item = &'a MetricReport>) -> MetricReport {
        let reports: Vec<&MetricReport> = reports.into_iter().collect();
        assert!(!reports.is_empty(), "mean of zero reports");
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
        MetricReport {
            accuracy: avg(&|r| r.accuracy),
            macro_f1: avg(&|r| r.macro_f1),
            weighted_f1: avg(&|r| r.weighted_f1),
            per_class: std::array::from_fn(|i| ClassPrf {
                precision: avg(&|r| r.per_class[i].precision),
                recall: avg(&|r| r.per_class[i].recall),
                f1: avg(&|r| r.per_class[i].f1),
                degenerate: reports.iter().any(|r| r.per_class[i].degenerate),
            }),
            support: reports[0].support,
        }
    }

    #[cfg(test)]
    pub(crate) fn from_accuracy_for_tests(accuracy: f64) -> MetricReport {
        MetricReport {
            accuracy,
            macro_f1: accuracy,
            weighted_f1: accuracy,
            per_class: [ClassPrf {
                precision: accuracy,
                recall: accuracy,
                f1: accuracy,
                degenerate: false,
            }; 3],
            support: [1, 1, 1],
        }
    }
}

/// accuracy = trace/total, macro F1 = unweighted mean of class F1, weighted
/// F1 = support-weighted mean.
pub fn summary(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let per_class = per_class_prf(cm);
    let supports = cm.supports();
    let accuracy = (0..3)
        .map(|i| cm.counts()[i][i])
        .sum::<usize>() as f64
        / total as f64;
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
    let weighted_f1 = per_class
        .iter()
        .zip(supports)
        .map(|(c, s)| c.f1 * s as f64)
        .sum::<f64>()
        / total as f64;
    Ok(MetricReport {
        accuracy,
        macro_f1,
        weighted_f1,
        per_class,
        support: supports,
    })
}

/// Rounds a [0, 1] metric onto the x100 report scale, half away from zero,
/// one decimal.
pub fn report_scale(value: f64) -> f64 {
    (value * 1000.0).round() / 10.0
}

/// Both arms' mean reports at one training-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReports {
    pub supervised: MetricReport,
    pub pet: MetricReport,
}

/// One learning-curve row per training-set size, both arms side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub rows: BTreeMap<usize, ArmReports>,
}

const ARMS: [&str; 2] = ["supervised", "pet"];
const CSV_HEADER: &str = "size,arm,accuracy,macro_f1,weighted_f1,\
conflict_precision,conflict_recall,conflict_f1,\
duplicate_precision,duplicate_recall,duplicate_f1,\
neutral_precision,neutral_recall,neutral_f1";

impl LearningCurve {
    pub fn new(rows: BTreeMap<usize, ArmReports>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidConfig(
                "learning curve needs at least one size".to_string(),
            ));
        }
        Ok(Self { rows })
    }

    fn report(&self, size: usize, arm: &str) -> &MetricReport {
        let pair = &self.rows[&size];
        if arm == "supervised" {
            &pair.supervised
        } else {
            &pair.pet
        }
    }

    /// Machine-readable CSV with exact round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (size, _) in &self.rows {
            for arm in ARMS {
                let r = self.report(*size, arm);
                out.push_str(&format!(
                    "{size},{arm},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    r.accuracy,
                    r.macro_f1,
                    r.weighted_f1,
                    r.per_class[0].precision,
                    r.per_class[0].recall,
                    r.per_class[0].f1,
                    r.per_class[1].precision,
                    r.per_class[1].recall,
                    r.per_class[1].f1,
                    r.per_class[2].precision,
                    r.per_class[2].recall,
                    r.per_class[2].f1,
                ));
            }
        }
        out
    }

    /// Parses the CSV emitted by [`LearningCurve::to_csv`]. Only the fields
    /// present in the CSV are recovered; supports are not part of the wire
    /// format.
    pub fn parse_csv(text: &str) -> Result<Vec<(usize, String, Vec<f64>)>> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyDataset)?;
        if header != CSV_HEADER {
            return Err(Error::KindMismatch("unexpected csv header".to_string()));
        }
        let mut rows = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 14 {
                return Err(Error::KindMismatch(format!(
                    "expected 14 csv fields, got {}",
                    fields.len()
                )));
            }
            let size: usize = fields[0]
                .parse()
                .map_err(|_| Error::KindMismatch("bad size field".to_string()))?;
            let values: Vec<f64> = fields[2..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::KindMismatch("bad float field".to_string()))
                })
                .collect::<Result<_>>()?;
            rows.push((size, fields[1].to_string(), values));
        }
        Ok(rows)
    }

    /// JSON mirror of the CSV fields.
    pub fn to_json(&self) -> serde_json::Value {
        let mut rows = Vec::new();
        for (size, _) in &self.rows {
            for arm in ARMS {
                let r = self.report(*size, arm);
                rows.push(serde_json::json!({
                    "size": size,
                    "arm": arm,
                    "accuracy": r.accuracy,
                    "macro_f1": r.macro_f1,
                    "weighted_f1": r.weighted_f1,
                    "conflict_precision": r.per_class[0].precision,
                    "conflict_recall": r.per_class[0].recall,
                    "conflict_f1": r.per_class[0].f1,
                    "duplicate_precision": r.per_class[1].precision,
                    "duplicate_recall": r.per_class[1].recall,
                    "duplicate_f1": r.per_class[1].f1,
                    "neutral_precision": r.per_class[2].precision,
                    "neutral_recall": r.per_class[2].recall,
                    "neutral_f1": r.per_class[2].f1,
                }));
            }
        }
        serde_json::json!({ "rows": rows })
    }

    /// Aligned human-readable table on the x100 scale.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>6}  {:>19}  {:>19}  {:>19}\n",
            "|T|", "Accuracy", "Macro F1", "Weighted F1"
        ));
        out.push_str(&format!(
            "{:>6}  {:>9} {:>9}  {:>9} {:>9}  {:>9} {:>9}\n",
            "", "Sup.", "PET", "Sup.", "PET", "Sup.", "PET"
        ));
        for (size, pair) in &self.rows {
            out.push_str(&format!(
                "{:>6}  {:>9.1} {:>9.1}  {:>9.1} {:>9.1}  {:>9.1} {:>9.1}\n",
                size,
                report_scale(pair.supervised.accuracy),
                report_scale(pair.pet.accuracy),
                report_scale(pair.supervised.macro_f1),
                report_scale(pair.pet.macro_f1),
                report_scale(pair.supervised.weighted_f1),
                report_scale(pair.pet.weighted_f1),
            ));
        }
        out
    }

    /// Plot-ready per-class series: for each (class, precision|recall), a CSV
    /// of size, supervised value, pet value.
    pub fn series(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (c, label) in Label::ALL.iter().enumerate() {
            for metric in ["precision", "recall"] {
                let mut csv = format!("size,supervised,pet\n");
                for (size, pair) in &self.rows {
                    let pick = |r: &MetricReport| {
                        if metric == "precision" {
                            r.per_class[c].precision
                        } else {
                            r.per_class[c].recall
                        }
                    };
                    csv.push_str(&format!(
                        "{size},{},{}\n",
                        pick(&pair.supervised),
                        pick(&pair.pet)
                    ));
                }
                out.push((format!("{}_{}", label.name(), metric), csv));
            }
        }
        out
    }
}

/// The two published confusion matrices (supervised / PET at |T| = 256),
/// used as fixtures throughout the test suite.
pub fn published_supervised_matrix() -> ConfusionMatrix {
    ConfusionMatrix::from_counts([[890, 141, 14], [199, 112, 4], [10, 0, 630]])
}

pub fn published_pet_matrix() -> ConfusionMatrix {
    ConfusionMatrix::from_counts([[941, 97, 7], [179, 136, 0], [9, 0, 631]])
}

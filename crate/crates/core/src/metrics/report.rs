use serde::{Deserialize, Serialize};

use super::Counts;
use crate::model::{LabelClass, LabelSpace, Polarity, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    /// Precision, recall and F1 from counts. A class that never occurs on
    /// either side scores 1.0 throughout.
    pub fn from_counts(label: impl Into<String>, tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let (precision, recall, f1) = if tp + fp + fn_ == 0 {
            (1.0, 1.0, 1.0)
        } else {
            let p = ratio(tp, tp + fp);
            let r = ratio(tp, tp + fn_);
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        };
        ClassMetrics {
            label: label.into(),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    /// Macro average of the three polarity-class F1 scores.
    pub avg_f1: f64,
    /// F1 of extraction alone, ignoring polarity.
    pub extraction_f1: f64,
    /// Share of positive extractions with the right polarity.
    pub polarity_acc: f64,
    pub per_class: Vec<ClassMetrics>,
    pub extraction: ClassMetrics,
    pub positive_extractions: usize,
    pub polarity_correct: usize,
    pub gold_targets: usize,
    pub predicted_targets: usize,
}

impl MetricsReport {
    pub fn from_counts(counts: &Counts, space: &LabelSpace) -> Self {
        let per_class: Vec<ClassMetrics> = Polarity::ALL
            .iter()
            .map(|&p| {
                let label = space
                    .label_for(LabelClass::Target(p))
                    .and_then(|i| space.name(i))
                    .unwrap_or("?");
                let [tp, fp, fn_] = counts.per_class[p.index()];
                ClassMetrics::from_counts(label, tp, fp, fn_)
            })
            .collect();
        let [tp, fp, fn_] = counts.extraction;
        let extraction = ClassMetrics::from_counts("extraction", tp, fp, fn_);
        let polarity_acc = if counts.positive_extractions == 0 {
            if counts.gold_targets == 0 && counts.predicted_targets == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            counts.polarity_correct as f64 / counts.positive_extractions as f64
        };
        MetricsReport {
            task: space.task(),
            avg_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64,
            extraction_f1: extraction.f1,
            polarity_acc,
            per_class,
            extraction,
            positive_extractions: counts.positive_extractions,
            polarity_correct: counts.polarity_correct,
            gold_targets: counts.gold_targets,
            predicted_targets: counts.predicted_targets,
        }
    }
}

/// One line of the comparison table. Scores are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub avg_f1: f64,
    pub extraction_f1: f64,
    pub polarity_acc: f64,
}

impl TableRow {
    pub fn from_report(method: impl Into<String>, r: &MetricsReport) -> Self {
        TableRow {
            method: method.into(),
            avg_f1: r.avg_f1,
            extraction_f1: r.extraction_f1,
            polarity_acc: r.polarity_acc,
        }
    }

    /// Mean of the headline scores over several runs, e.g. training seeds.
    pub fn mean(method: impl Into<String>, reports: &[MetricsReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        TableRow {
            method: method.into(),
            avg_f1: avg(|r| r.avg_f1),
            extraction_f1: avg(|r| r.extraction_f1),
            polarity_acc: avg(|r| r.polarity_acc),
        }
    }
}

fn column_names(task: Task) -> (&'static str, &'static str) {
    match task {
        Task::Compat => ("PCA F1", "CER F1"),
        Task::Satisf => ("FSA F1", "FNR F1"),
    }
}

/// Method | averaged F1 | extraction F1 | polarity accuracy, in percent.
pub fn render_table(task: Task, rows: &[TableRow]) -> String {
    let (avg, ext) = column_names(task);
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max("Method".len());
    let mut out = format!("{:<width$} | {avg:>8} | {ext:>8} | {:>11}\n", "Method", "Polar. Acc.");
    out.push_str(&format!("{}-|-{}-|-{}-|-{}\n", "-".repeat(width), "-".repeat(8), "-".repeat(8), "-".repeat(11)));
    for r in rows {
        out.push_str(&format!(
            "{:<width$} | {:>8.1} | {:>8.1} | {:>11.1}\n",
            r.method,
            100.0 * r.avg_f1,
            100.0 * r.extraction_f1,
            100.0 * r.polarity_acc
        ));
    }
    out
}

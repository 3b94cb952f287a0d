//! Confusion matrices, UAR and class-wise precision / recall / F1.
//!
//! Leave-one-speaker-out folds usually hold a single class, so class-wise
//! scores are computed from predictions pooled over all folds, while the
//! accuracy is also reported as mean and population standard deviation over
//! folds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes() != self.n_classes() {
            return Err(Error::LengthMismatch {
                expected: self.n_classes(),
                actual: other.n_classes(),
            });
        }
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            row.iter_mut().zip(orow).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }

    /// CSV with a header row of class names and one row per actual class.
    pub fn to_csv(&self, class_names: &[&str]) -> String {
        let mut out = String::from("actual\\predicted");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(class_names.get(i).copied().unwrap_or("?"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(actual: &[usize], predicted: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&a, &p) in actual.iter().zip(predicted) {
        if a >= n_classes || p >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "label {} outside the {n_classes}-class set",
                a.max(p)
            )));
        }
        cm.counts[a][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Unweighted average recall (balanced accuracy).
    pub uar: f64,
    /// Plain fraction of correct predictions.
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Classes never predicted; their precision is reported as 0.
    pub precision_undefined: Vec<bool>,
    /// Classes absent from the ground truth; their recall is reported as 0.
    pub recall_undefined: Vec<bool>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is all zeros".into()));
    }
    let n = cm.n_classes();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut f1 = Vec::with_capacity(n);
    let mut precision_undefined = Vec::with_capacity(n);
    let mut recall_undefined = Vec::with_capacity(n);
    for i in 0..n {
        let row: u64 = cm.counts[i].iter().sum();
        let col: u64 = cm.counts.iter().map(|r| r[i]).sum();
        let (r, r_undef) = ratio(cm.counts[i][i], row);
        let (p, p_undef) = ratio(cm.counts[i][i], col);
        recall.push(r);
        precision.push(p);
        recall_undefined.push(r_undef);
        precision_undefined.push(p_undef);
        f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
    }
    Ok(MetricReport {
        uar: recall.iter().sum::<f64>() / n as f64,
        accuracy: cm.trace() as f64 / total as f64,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        confusion: cm.clone(),
    })
}

/// Fold-level and pooled summary of a cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n_folds: usize,
    pub fold_accuracies: Vec<f64>,
    pub accuracy_mean: f64,
    /// Population standard deviation over folds.
    pub accuracy_std: f64,
    /// Metrics over the union of all fold predictions.
    pub pooled: MetricReport,
}

pub fn aggregate_folds(fold_confusions: &[ConfusionMatrix]) -> Result<ExperimentReport> {
    let Some(first) = fold_confusions.first() else {
        return Err(Error::InvalidArgument("no folds to aggregate".into()));
    };
    let mut pooled = ConfusionMatrix::zeros(first.n_classes());
    let mut accs = Vec::with_capacity(fold_confusions.len());
    for cm in fold_confusions {
        pooled.add(cm)?;
        let (acc, undefined) = ratio(cm.trace(), cm.total());
        if undefined {
            return Err(Error::InvalidArgument("fold with no test samples".into()));
        }
        accs.push(acc);
    }
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    Ok(ExperimentReport {
        n_folds: accs.len(),
        fold_accuracies: accs,
        accuracy_mean: mean,
        accuracy_std: var.sqrt(),
        pooled: compute_metrics(&pooled)?,
    })
}

/// Round half away from zero to `decimals` places.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

/// Relative change of `accuracy` over `baseline`, in percent.
pub fn relative_improvement_pct(baseline: f64, accuracy: f64) -> f64 {
    100.0 * (accuracy - baseline) / baseline
}

/// Relative improvement as displayed in comparison tables: the percentage
/// is reported to 0.01 % and then shown to 0.1 %.
pub fn display_relative_pct(baseline: f64, accuracy: f64) -> String {
    let reported = round_to(relative_improvement_pct(baseline, accuracy), 2);
    format!("{:.1}", round_to(reported, 1))
}

/// Column labels of the results table, in order.
pub fn table_columns() -> Vec<String> {
    let mut cols = vec!["Feature".to_string(), "Accuracy".to_string()];
    for c in 0..3 {
        cols.push(format!("Precision-{c}"));
        cols.push(format!("Recall-{c}"));
        cols.push(format!("F1 score-{c}"));
    }
    cols
}

/// Cells for one table row: accuracy as `mean ± std` in percent, then
/// precision, recall and F1 for classes 0..2.
pub fn table_row(name: &str, report: &ExperimentReport) -> Vec<String> {
    let mut row = vec![
        name.to_string(),
        format!(
            "{:.1} ± {:.1}",
            round_to(100.0 * report.accuracy_mean, 1),
            round_to(100.0 * report.accuracy_std, 1)
        ),
    ];
    for c in 0..3 {
        let p = &report.pooled;
        for v in [&p.precision, &p.recall, &p.f1] {
            row.push(v.get(c).map_or_else(|| "-".to_string(), |x| format!("{x:.2}")));
        }
    }
    row
}

/// Renders rows as a pipe-separated text table.
pub fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for (i, width) in widths.iter().enumerate() {
            let cell = cells.get(i).map(String::as_str).unwrap_or("");
            let pad = width - cell.chars().count();
            s.push(' ');
            s.push_str(cell);
            s.push_str(&" ".repeat(pad));
            s.push_str(" |");
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(&sep));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

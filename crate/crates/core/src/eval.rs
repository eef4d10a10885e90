//! Confusion matrices and plain-text evaluation reports.
//!
//! Outliers are tracked in their own column and always count as errors in
//! the headline rate: refusing to answer is still a wrong answer.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::inference::{Classification, Prediction};
use crate::rulebase::RuleBase;

/// Row per actual class, column per predicted class, plus a trailing
/// outlier column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
    c: usize,
}

impl ConfusionMatrix {
    pub fn c(&self) -> usize {
        self.c
    }

    /// `counts()[actual][predicted]`; index `c` is the outlier column.
    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.c).map(|k| self.counts[k][k]).sum()
    }

    pub fn outliers(&self) -> usize {
        self.counts.iter().map(|row| row[self.c]).sum()
    }

    /// Percentage of samples not classified as their actual class.
    pub fn error_rate(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::invalid("confusion matrix is empty"));
        }
        Ok(100.0 * (total - self.correct()) as f64 / total as f64)
    }

    /// Per-class recall in `[0, 1]`; zero for classes with no samples.
    pub fn per_class_accuracy(&self) -> Vec<f64> {
        (0..self.c)
            .map(|k| {
                let row: usize = self.counts[k].iter().sum();
                if row == 0 {
                    0.0
                } else {
                    self.counts[k][k] as f64 / row as f64
                }
            })
            .collect()
    }
}

/// Tallies predictions against actual labels.
pub fn confusion_matrix(
    results: &[Classification],
    labels: &[usize],
    c: usize,
) -> Result<ConfusionMatrix> {
    if c == 0 {
        return Err(Error::invalid("confusion matrix needs at least one class"));
    }
    if results.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} classifications for {} labels",
            results.len(),
            labels.len()
        )));
    }
    let mut counts = vec![vec![0usize; c + 1]; c];
    for (r, &y) in results.iter().zip(labels) {
        if y >= c {
            return Err(Error::invalid(format!("label {y} out of range for {c} classes")));
        }
        match r.prediction {
            Prediction::Outlier => counts[y][c] += 1,
            Prediction::Class(k) => {
                if k >= c {
                    return Err(Error::invalid(format!(
                        "prediction {k} out of range for {c} classes"
                    )));
                }
                counts[y][k] += 1;
            }
        }
    }
    Ok(ConfusionMatrix { counts, c })
}

fn push_split(out: &mut String, name: &str, cm: &ConfusionMatrix) {
    let total = cm.total();
    let wrong = total - cm.correct();
    let rate = cm.error_rate().map(|r| format!("{r:.2}%")).unwrap_or_else(|_| "n/a".into());
    let _ = writeln!(out, "{name}: error {rate} ({wrong}/{total}), outliers {}", cm.outliers());

    let acc = cm.per_class_accuracy();
    let accs: Vec<String> =
        acc.iter().enumerate().map(|(k, a)| format!("{k}: {:.2}%", 100.0 * a)).collect();
    let _ = writeln!(out, "  per-class accuracy: {}", accs.join("  "));

    let _ = writeln!(out, "  confusion matrix (rows actual, columns predicted, last column outlier):");
    let mut header = String::from("    actual\\pred");
    for k in 0..cm.c() {
        let _ = write!(header, "{k:>8}");
    }
    header.push_str("  outlier");
    let _ = writeln!(out, "{header}");
    for (k, row) in cm.counts().iter().enumerate() {
        let mut line = format!("    {k:>11}");
        for v in row {
            let _ = write!(line, "{v:>8}");
        }
        let _ = writeln!(out, "{line}");
    }
}

/// Renders a self-contained text report: configuration echo, the rule table,
/// and one section per provided split.
pub fn render_report(
    rb: &RuleBase,
    train: Option<&ConfusionMatrix>,
    test: Option<&ConfusionMatrix>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "somrules evaluation report");
    let _ = writeln!(
        out,
        "rules: {} | features: {} | classes: {}",
        rb.rules.len(),
        rb.p,
        rb.c
    );
    let _ = writeln!(
        out,
        "tnorm: {} | firing threshold: {} | k_w: {}",
        rb.tnorm, rb.firing_threshold, rb.k_w
    );
    let _ = writeln!(out, "rule summary ((center, sigma) per feature):");
    for r in &rb.rules {
        let clauses: Vec<String> =
            r.clauses.iter().map(|cl| format!("({:.4}, {:.4})", cl.center, cl.sigma)).collect();
        let _ = writeln!(out, "  rule {:>3} -> class {}, q = {:.4}: {}", r.id, r.class, r.q, clauses.join(" "));
    }
    if let Some(cm) = train {
        push_split(&mut out, "training", cm);
    }
    if let Some(cm) = test {
        push_split(&mut out, "test", cm);
    }
    out
}

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ClassifyError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    /// Sorted union of true and predicted labels; indexes `confusion`.
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[truth][prediction]` counts.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, pooled (micro) F1 and support-weighted F1.
pub fn evaluate(predictions: &[String], truth: &[String]) -> Result<ClassificationReport> {
    if predictions.len() != truth.len() {
        return Err(ClassifyError::LengthMismatch { rows: predictions.len(), labels: truth.len() });
    }
    if truth.is_empty() {
        return Err(ClassifyError::Empty);
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for l in truth.iter().chain(predictions) {
        index.insert(l.as_str(), 0);
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let classes: Vec<String> = index.keys().map(|s| s.to_string()).collect();
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, t) in predictions.iter().zip(truth) {
        confusion[index[t.as_str()]][index[p.as_str()]] += 1;
    }

    let n = truth.len();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let wrong = n - correct;
    let mut per_class = Vec::with_capacity(k);
    let mut weighted = 0.0;
    for (i, class) in classes.iter().enumerate() {
        let tp = confusion[i][i];
        let support: usize = confusion[i].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        weighted += support as f64 * f1;
        per_class.push(ClassMetrics { class: class.clone(), precision, recall, f1, support });
    }
    // pooled counts: every error is one FP and one FN
    let micro_f1 = ratio(2 * correct, 2 * correct + 2 * wrong);
    Ok(ClassificationReport {
        accuracy: ratio(correct, n),
        micro_f1,
        weighted_f1: weighted / n as f64,
        classes,
        per_class,
        confusion,
    })
}

impl ClassificationReport {
    /// Fixed-width per-class table.
    pub fn per_class_table(&self) -> String {
        let width = self.classes.iter().map(String::len).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  precision  recall     f1  support\n", "class");
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>6.4}  {:>5.4}  {:>7}",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        out
    }
}

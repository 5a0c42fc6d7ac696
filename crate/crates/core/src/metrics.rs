//! Confusion-matrix based classification metrics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::IntentLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: IntentLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Evaluation summary. Weighted scores average the per-class scores using
/// gold support as weights; a class never predicted has precision 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    /// Mean cross-entropy of the gold labels.
    pub loss: f64,
    pub labels: Vec<IntentLabel>,
    /// Rows are gold labels, columns predicted labels.
    pub confusion_matrix: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `labels.len() × labels.len()` confusion matrix from index pairs.
pub fn confusion_matrix(n_labels: usize, gold: &[usize], pred: &[usize]) -> Vec<Vec<usize>> {
    assert_eq!(gold.len(), pred.len(), "gold and predicted lengths differ");
    let mut m = alloc::vec![alloc::vec![0usize; n_labels]; n_labels];
    for (&g, &p) in gold.iter().zip(pred) {
        m[g][p] += 1;
    }
    m
}

impl EvalReport {
    pub fn from_confusion(labels: Vec<IntentLabel>, confusion: Vec<Vec<usize>>, loss: f64) -> Self {
        let n = labels.len();
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..n).map(|i| confusion[i][i]).sum();

        let mut per_class = Vec::with_capacity(n);
        let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
        for (i, label) in labels.iter().enumerate() {
            let tp = confusion[i][i];
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[i]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let w = support as f64;
            wp += w * precision;
            wr += w * recall;
            wf += w * f1;
            per_class.push(ClassMetrics { label: label.clone(), precision, recall, f1, support });
        }
        let t = total as f64;
        let avg = |x: f64| if total == 0 { 0.0 } else { x / t };
        Self {
            accuracy: ratio(trace, total),
            weighted_f1: avg(wf),
            weighted_precision: avg(wp),
            weighted_recall: avg(wr),
            loss,
            labels,
            confusion_matrix: confusion,
            per_class,
        }
    }

    pub fn from_predictions(labels: Vec<IntentLabel>, gold: &[usize], pred: &[usize], loss: f64) -> Self {
        let m = confusion_matrix(labels.len(), gold, pred);
        Self::from_confusion(labels, m, loss)
    }

    pub fn evaluated(&self) -> usize {
        self.confusion_matrix.iter().flatten().sum()
    }
}

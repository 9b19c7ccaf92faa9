//! Confusion matrix and derived classification metrics: accuracy,
//! per-class precision/recall/F1 with support, and their macro
//! (unweighted) means. Any 0/0 ratio is defined as 0 and flagged.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    LabelOutOfRange { index: usize, label: usize, num_classes: usize },
    LengthMismatch { true_len: usize, pred_len: usize },
    EmptyMatrix,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LabelOutOfRange { index, label, num_classes } => write!(
                f,
                "label {label} at index {index} out of range for {num_classes} classes"
            ),
            MetricsError::LengthMismatch { true_len, pred_len } => write!(
                f,
                "label slices differ in length: {true_len} true vs {pred_len} predicted"
            ),
            MetricsError::EmptyMatrix => write!(f, "confusion matrix has no samples"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricsError {}

/// K x K count matrix; rows index the true class, columns the
/// predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> ConfusionMatrix {
        assert!(num_classes >= 1, "need at least one class");
        ConfusionMatrix { k: num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.k + predicted]
    }

    /// Row-major counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        assert!(true_class < self.k && predicted < self.k, "label out of range");
        self.counts[true_class * self.k + predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Elementwise sum; matrices are a commutative monoid under merge,
    /// so evaluation can be sharded and recombined.
    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        assert_eq!(self.k, other.k, "class counts differ");
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        ConfusionMatrix { k: self.k, counts }
    }
}

pub fn confusion(
    true_labels: &[usize],
    predicted_labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if true_labels.len() != predicted_labels.len() {
        return Err(MetricsError::LengthMismatch {
            true_len: true_labels.len(),
            pred_len: predicted_labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (index, (&t, &p)) in true_labels.iter().zip(predicted_labels).enumerate() {
        let bad = if t >= num_classes { Some(t) } else if p >= num_classes { Some(p) } else { None };
        if let Some(label) = bad {
            return Err(MetricsError::LabelOutOfRange { index, label, num_classes });
        }
        cm.record(t, p);
    }
    Ok(cm)
}

/// Metrics derived from a confusion matrix. Macro values are
/// unweighted means of the per-class values over all classes.
/// `degenerate[c]` marks classes where precision or recall was a 0/0
/// ratio (reported as 0).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub degenerate: Vec<bool>,
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let k = cm.num_classes();
    let mut precision = Vec::with_capacity(k);
    let mut recall = Vec::with_capacity(k);
    let mut f1 = Vec::with_capacity(k);
    let mut support = Vec::with_capacity(k);
    let mut degenerate = Vec::with_capacity(k);
    let mut trace = 0u64;
    for c in 0..k {
        let tp = cm.count(c, c);
        trace += tp;
        let row: u64 = (0..k).map(|p| cm.count(c, p)).sum();
        let col: u64 = (0..k).map(|t| cm.count(t, c)).sum();
        let (p, p_deg) = ratio(tp, col);
        let (r, r_deg) = ratio(tp, row);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        precision.push(p);
        recall.push(r);
        f1.push(f);
        support.push(row);
        degenerate.push(p_deg || r_deg);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / k as f64;
    Ok(MetricReport {
        accuracy: trace as f64 / total as f64,
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        precision,
        recall,
        f1,
        support,
        degenerate,
    })
}

/// 0/0 is defined as 0 and reported as degenerate.
fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) }
}

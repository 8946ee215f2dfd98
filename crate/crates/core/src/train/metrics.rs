use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_predictions(num_classes: usize, truth: &[usize], pred: &[usize]) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(num_classes);
        cm.add(truth, pred)?;
        Ok(cm)
    }

    pub fn add(&mut self, truth: &[usize], pred: &[usize]) -> Result<()> {
        if truth.len() != pred.len() {
            return Err(Error::domain(format!(
                "{} labels for {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let k = self.num_classes();
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::domain(format!("class id {} out of range (< {k})", t.max(p))));
            }
            self.counts[t][p] += 1;
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.num_classes()).filter(|&t| t != c).map(|t| self.counts[t][c]).sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.num_classes()).filter(|&p| p != c).map(|p| self.counts[c][p]).sum()
    }

    /// `TP / (TP + FP + FN)`, or 1 when the class appears in neither truth
    /// nor prediction.
    pub fn iou(&self, c: usize) -> f64 {
        let tp = self.true_positives(c);
        let denom = tp + self.false_positives(c) + self.false_negatives(c);
        if denom == 0 {
            1.0
        } else {
            tp as f64 / denom as f64
        }
    }

    /// `TP / (TP + FP)`, or 0 when the class is never predicted.
    pub fn precision(&self, c: usize) -> f64 {
        let tp = self.true_positives(c);
        let denom = tp + self.false_positives(c);
        if denom == 0 {
            0.0
        } else {
            tp as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.num_classes()).map(|c| self.true_positives(c)).sum::<u64>() as f64 / total as f64
    }
}

/// Segmentation quality of one evaluation (or the mean of several).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_iou: Vec<f64>,
    pub miou: f64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub mean_loss: f64,
    pub epoch_time: f64,
    /// Classes absent from both truth and prediction, scored IoU 1.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vacuous_classes: Vec<usize>,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix, mean_loss: f64) -> Self {
        let k = cm.num_classes();
        let per_class_iou: Vec<f64> = (0..k).map(|c| cm.iou(c)).collect();
        let vacuous_classes = (0..k)
            .filter(|&c| cm.true_positives(c) + cm.false_positives(c) + cm.false_negatives(c) == 0)
            .collect();
        MetricsReport {
            miou: per_class_iou.iter().sum::<f64>() / k as f64,
            per_class_iou,
            accuracy: cm.accuracy(),
            macro_precision: (0..k).map(|c| cm.precision(c)).sum::<f64>() / k as f64,
            mean_loss,
            epoch_time: 0.0,
            vacuous_classes,
        }
    }

    /// Field-wise arithmetic mean; vacuous classes are unioned.
    pub fn mean(reports: &[MetricsReport]) -> Result<MetricsReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::domain("cannot average zero reports"))?;
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let k = first.per_class_iou.len();
        if reports.iter().any(|r| r.per_class_iou.len() != k) {
            return Err(Error::domain("reports disagree on the number of classes"));
        }
        let per_class_iou = (0..k)
            .map(|c| reports.iter().map(|r| r.per_class_iou[c]).sum::<f64>() / n)
            .collect();
        let mut vacuous_classes: Vec<usize> = reports.iter().flat_map(|r| r.vacuous_classes.clone()).collect();
        vacuous_classes.sort_unstable();
        vacuous_classes.dedup();
        Ok(MetricsReport {
            per_class_iou,
            miou: avg(|r| r.miou),
            accuracy: avg(|r| r.accuracy),
            macro_precision: avg(|r| r.macro_precision),
            mean_loss: avg(|r| r.mean_loss),
            epoch_time: avg(|r| r.epoch_time),
            vacuous_classes,
        })
    }
}

/// Metrics of hard predictions against ground truth, without a loss.
pub fn evaluate_predictions(num_classes: usize, truth: &[usize], pred: &[usize]) -> Result<MetricsReport> {
    if truth.is_empty() {
        return Err(Error::domain("evaluation needs at least one labeled point"));
    }
    let cm = ConfusionMatrix::from_predictions(num_classes, truth, pred)?;
    Ok(MetricsReport::from_confusion(&cm, 0.0))
}

use super::MetricError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy plus macro precision/recall/F1 over the labels present in `gts`.
/// A label never predicted scores precision 0.
pub fn classification_report<L: Ord + Clone>(preds: &[L], gts: &[L]) -> Result<ClassificationReport, MetricError> {
    if preds.len() != gts.len() {
        return Err(MetricError::LengthMismatch);
    }
    if gts.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n = gts.len() as f64;
    let correct = preds.iter().zip(gts).filter(|(p, g)| p == g).count();
    let labels: BTreeSet<&L> = gts.iter().collect();
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for label in &labels {
        let tp = preds.iter().zip(gts).filter(|(p, g)| p == label && g == label).count() as f64;
        let predicted = preds.iter().filter(|p| p == label).count() as f64;
        let actual = gts.iter().filter(|g| g == label).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / actual;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        sp += precision;
        sr += recall;
        sf += f1;
    }
    let k = labels.len() as f64;
    Ok(ClassificationReport {
        accuracy: correct as f64 / n,
        precision: sp / k,
        recall: sr / k,
        f1: sf / k,
    })
}

//! Center-distance matching, average precision and true-positive errors.

use super::MetricError;
use crate::geom::wrap_angle;
use crate::sensing::Detection3D;
use crate::world::ObjectClass;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const MATCH_THRESHOLD_M: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(pred_idx, gt_idx, center_dist_m)` in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Prediction indices by descending confidence, stable on index.
fn confidence_order(preds: &[Detection3D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence).then(a.cmp(&b)));
    order
}

/// Greedy: each prediction, most confident first, takes the nearest
/// unmatched same-class ground truth within `thresh_m`.
pub fn match_detections(preds: &[Detection3D], gts: &[Detection3D], thresh_m: f64) -> MatchResult {
    let mut taken = vec![false; gts.len()];
    let mut out = MatchResult::default();
    for pi in confidence_order(preds) {
        let p = &preds[pi];
        let best = gts
            .iter()
            .enumerate()
            .filter(|(gi, g)| !taken[*gi] && g.class == p.class)
            .map(|(gi, g)| (gi, dist(p.center, g.center)))
            .filter(|(_, d)| *d <= thresh_m)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match best {
            Some((gi, d)) => {
                taken[gi] = true;
                out.pairs.push((pi, gi, d));
            }
            None => out.unmatched_preds.push(pi),
        }
    }
    out.unmatched_preds.sort_unstable();
    out.unmatched_gts = (0..gts.len()).filter(|&g| !taken[g]).collect();
    out
}

/// Area under the max-precision envelope of the precision/recall curve,
/// for one class (inputs are filtered to `class`).
pub fn average_precision(
    preds: &[Detection3D],
    gts: &[Detection3D],
    class: ObjectClass,
    thresh_m: f64,
) -> Result<f64, MetricError> {
    let preds: Vec<Detection3D> = preds.iter().filter(|d| d.class == class).cloned().collect();
    let gts: Vec<Detection3D> = gts.iter().filter(|d| d.class == class).cloned().collect();
    if gts.is_empty() {
        return Err(MetricError::NoGroundTruth);
    }
    let m = match_detections(&preds, &gts, thresh_m);
    let mut is_tp = vec![false; preds.len()];
    for &(p, _, _) in &m.pairs {
        is_tp[p] = true;
    }
    let scored: Vec<(f64, bool)> = preds.iter().zip(is_tp).map(|(d, tp)| (d.confidence, tp)).collect();
    Ok(pooled_average_precision(&scored, gts.len()))
}

/// AP from already-matched `(confidence, is_true_positive)` entries, e.g.
/// pooled over many frames that were matched one at a time.
pub fn pooled_average_precision(scored: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));
    let mut precision = Vec::with_capacity(scored.len());
    let mut recall = Vec::with_capacity(scored.len());
    let mut tp = 0usize;
    for (n, i) in order.into_iter().enumerate() {
        if scored[i].1 {
            tp += 1;
        }
        precision.push(tp as f64 / (n + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev) * p;
        prev = *r;
    }
    ap
}

/// Per-class AP and their mean over classes that have ground truth.
pub fn mean_average_precision(
    preds: &[Detection3D],
    gts: &[Detection3D],
    thresh_m: f64,
) -> (Option<f64>, BTreeMap<ObjectClass, f64>) {
    let per_class: BTreeMap<ObjectClass, f64> = ObjectClass::ALL
        .iter()
        .filter_map(|&c| average_precision(preds, gts, c, thresh_m).ok().map(|ap| (c, ap)))
        .collect();
    let mean = if per_class.is_empty() {
        None
    } else {
        Some(per_class.values().sum::<f64>() / per_class.len() as f64)
    };
    (mean, per_class)
}

/// Mean translation, surface, orientation and velocity errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TpErrors {
    pub matches: usize,
    pub mate: f64,
    pub mase: f64,
    pub maoe: f64,
    pub mave: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpRow {
    pub class: ObjectClass,
    /// `None` when the class has no matches.
    pub errors: Option<TpErrors>,
}

/// One row per class, always in Car, Truck, Van, Pedestrian order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpTable {
    pub rows: Vec<TpRow>,
}

impl TpTable {
    pub fn get(&self, class: ObjectClass) -> Option<&TpErrors> {
        self.rows.iter().find(|r| r.class == class).and_then(|r| r.errors.as_ref())
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<12}{:>10}{:>14}{:>12}{:>12}\n", "class", "mATE (m)", "mASE (1-IoU)", "mAOE (rad)", "mAVE (m/s)");
        for r in &self.rows {
            let cell = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            let e = r.errors;
            out.push_str(&format!(
                "{:<12}{:>10}{:>14}{:>12}{:>12}\n",
                r.class.name(),
                cell(e.map(|e| e.mate)),
                cell(e.map(|e| e.mase)),
                cell(e.map(|e| e.maoe)),
                cell(e.map(|e| e.mave))
            ));
        }
        out
    }
}

/// IoU of two footprints after aligning centers and headings.
pub fn aligned_iou(a: &Detection3D, b: &Detection3D) -> f64 {
    let inter = a.length.min(b.length) * a.width.min(b.width);
    let union = a.length * a.width + b.length * b.width - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

pub fn tp_metrics(matches: &MatchResult, preds: &[Detection3D], gts: &[Detection3D]) -> TpTable {
    let mut sums: BTreeMap<ObjectClass, TpErrors> = BTreeMap::new();
    for &(pi, gi, _) in &matches.pairs {
        let (p, g) = (&preds[pi], &gts[gi]);
        let e = sums.entry(g.class).or_default();
        e.matches += 1;
        e.mate += dist(p.center, g.center);
        e.mase += 1.0 - aligned_iou(p, g);
        e.maoe += wrap_angle(p.yaw - g.yaw).abs();
        e.mave += (p.speed - g.speed).abs();
    }
    let rows = ObjectClass::ALL
        .iter()
        .map(|&class| TpRow {
            class,
            errors: sums.get(&class).map(|s| {
                let n = s.matches as f64;
                TpErrors {
                    matches: s.matches,
                    mate: s.mate / n,
                    mase: s.mase / n,
                    maoe: s.maoe / n,
                    mave: s.mave / n,
                }
            }),
        })
        .collect();
    TpTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn det(class: ObjectClass, x: f64, y: f64, conf: f64) -> Detection3D {
        let (length, width) = class.default_footprint();
        Detection3D {
            class,
            center: [x, y],
            yaw: 0.0,
            length,
            width,
            confidence: conf,
            speed: 0.0,
            violation: false,
            peripheral: false,
            track_id: None,
        }
    }

    #[test]
    fn identical_sets_match_fully() {
        let gts = vec![det(ObjectClass::Car, 0.0, 0.0, 1.0), det(ObjectClass::Van, 5.0, 5.0, 1.0)];
        let m = match_detections(&gts, &gts, 2.0);
        assert_eq!(m.pairs.len(), 2);
        assert!(m.pairs.iter().all(|p| p.2 == 0.0));
    }

    #[test]
    fn lone_pred_unmatched() {
        let m = match_detections(&[det(ObjectClass::Car, 0.0, 0.0, 1.0)], &[], 2.0);
        assert_eq!(m.unmatched_preds, vec![0]);
    }

    #[test]
    fn greedy_beats_index_order() {
        // index order would pair p0 with g0 and leave p1 stranded
        let gts = vec![det(ObjectClass::Car, 0.0, 0.0, 1.0), det(ObjectClass::Car, 3.0, 0.0, 1.0), det(ObjectClass::Car, 20.0, 0.0, 1.0)];
        let preds = vec![
            det(ObjectClass::Car, 1.4, 0.0, 0.5),
            det(ObjectClass::Car, 0.2, 0.0, 0.9),
            det(ObjectClass::Car, 20.5, 0.0, 0.7),
        ];
        let m = match_detections(&preds, &gts, 2.0);
        let mut pairs: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.0, p.1)).collect();
        pairs.sort();
        assert_eq!(pairs, vec![(0, 1), (1, 0), (2, 2)]);
        let cost: f64 = m.pairs.iter().map(|p| p.2).sum();
        assert!((cost - 2.3).abs() < 1e-12);
    }

    #[test]
    fn ap_examples() {
        let g = vec![det(ObjectClass::Car, 0.0, 0.0, 1.0)];
        assert_eq!(average_precision(&g, &g, ObjectClass::Car, 2.0).unwrap(), 1.0);
        let preds = vec![det(ObjectClass::Car, 10.0, 0.0, 0.9), det(ObjectClass::Car, 0.1, 0.0, 0.8)];
        assert!((average_precision(&preds, &g, ObjectClass::Car, 2.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(average_precision(&[], &g, ObjectClass::Car, 2.0).unwrap(), 0.0);
        assert_eq!(average_precision(&preds, &g, ObjectClass::Van, 2.0), Err(MetricError::NoGroundTruth));
    }

    #[test]
    fn tp_offsets() {
        let g = vec![det(ObjectClass::Truck, 0.0, 0.0, 1.0)];
        let p = vec![det(ObjectClass::Truck, 0.3, 0.4, 1.0)];
        let t = tp_metrics(&match_detections(&p, &g, 2.0), &p, &g);
        let e = t.get(ObjectClass::Truck).unwrap();
        assert!((e.mate - 0.5).abs() < 1e-12);
        assert_eq!(e.mase, 0.0);
        assert_eq!(t.rows.len(), 4);
        assert!(t.get(ObjectClass::Car).is_none());
    }

    #[test]
    fn orientation_wraps() {
        let g = vec![det(ObjectClass::Car, 0.0, 0.0, 1.0)];
        let mut p = g.clone();
        p[0].yaw = 2.0 * std::f64::consts::PI - 0.1;
        let t = tp_metrics(&match_detections(&p, &g, 2.0), &p, &g);
        assert!((t.get(ObjectClass::Car).unwrap().maoe - 0.1).abs() < 1e-9);
    }
}

//! Episode-level perception scoring against simulator ground truth.

use super::detection::{match_detections, pooled_average_precision, tp_metrics, MatchResult, TpTable, MATCH_THRESHOLD_M};
use super::occupancy::{bev_miou, instance_mask, motion_vpq, occupancy_from_boxes, OCCUPIED_THRESHOLD};
use crate::fusion::to_global_frame;
use crate::geom::OrientedRect;
use crate::runner::TickRecord;
use crate::sensing::{Detection3D, GridSpec};
use crate::world::{ActorId, ObjectClass};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionReport {
    pub ticks: usize,
    pub map: Option<f64>,
    pub ap_per_class: BTreeMap<ObjectClass, f64>,
    pub tp: TpTable,
    pub bev_miou: Option<f64>,
    pub motion_vpq: Option<f64>,
    pub fused_recall: Option<f64>,
    /// Recall of each sensing node on its own.
    pub agent_recall: BTreeMap<ActorId, f64>,
    pub ground_truth_objects: usize,
}

impl PerceptionReport {
    pub fn render(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
        let mut out = String::new();
        out.push_str(&format!("{:<16}{:>10}{:>10}{:>10}\n", "", "mAP (%)", "mIOU (%)", "VPQ (%)"));
        out.push_str(&format!(
            "{:<16}{:>10}{:>10}{:>10}\n",
            "fused",
            pct(self.map),
            pct(self.bev_miou),
            pct(self.motion_vpq)
        ));
        out.push('\n');
        out.push_str(&self.tp.render());
        out.push('\n');
        out.push_str(&format!("{:<16}{:>10}\n", "recall", "(%)"));
        out.push_str(&format!("{:<16}{:>10}\n", "fused", pct(self.fused_recall)));
        for (id, r) in &self.agent_recall {
            out.push_str(&format!("{:<16}{:>10}\n", format!("node {id}"), pct(Some(*r))));
        }
        out
    }
}

/// Accumulates per-tick matches; feed it every [`TickRecord`] of a run.
#[derive(Debug, Default)]
pub struct PerceptionEval {
    ticks: usize,
    scored: BTreeMap<ObjectClass, Vec<(f64, bool)>>,
    gt_counts: BTreeMap<ObjectClass, usize>,
    tp_preds: Vec<Detection3D>,
    tp_gts: Vec<Detection3D>,
    miou_sum: f64,
    vpq_pred: Vec<Vec<u32>>,
    vpq_gt: Vec<Vec<u32>>,
    gt_total: usize,
    fused_tp: usize,
    agent_tp: BTreeMap<ActorId, usize>,
    agent_gt: BTreeMap<ActorId, usize>,
    /// Compute raster metrics (slower).
    pub rasters: bool,
    /// Only score objects some sensing node had line of sight to.
    pub observable_only: bool,
}

impl PerceptionEval {
    pub fn new(rasters: bool) -> Self {
        Self {
            rasters,
            ..Self::default()
        }
    }

    pub fn observable_only(mut self) -> Self {
        self.observable_only = true;
        self
    }

    /// Scores one tick. Ground truth is every non-ego actor inside the ego's
    /// fused window, optionally restricted to observable ones.
    pub fn add(&mut self, rec: &TickRecord, ego_id: ActorId, grid: &GridSpec) {
        let Some(product) = &rec.product else { return };
        if product.tick != rec.tick {
            return;
        }
        let spec = grid.with_origin(product.ego_pose);
        let gts: Vec<Detection3D> = rec
            .world
            .actors
            .iter()
            .filter(|a| a.id != ego_id && spec.contains_world(a.position))
            .filter(|a| !self.observable_only || rec.observable.contains(&a.id))
            .map(|a| Detection3D::from_actor(a, 1.0))
            .collect();
        self.ticks += 1;
        for g in &gts {
            *self.gt_counts.entry(g.class).or_default() += 1;
        }

        // predictions outside the window are out of scope, as is ground truth
        let preds: Vec<Detection3D> =
            product.detections.iter().filter(|d| spec.contains_world(d.center)).cloned().collect();
        let preds = &preds;
        let m = match_detections(preds, &gts, MATCH_THRESHOLD_M);
        let mut tp = vec![false; preds.len()];
        for &(pi, gi, _) in &m.pairs {
            tp[pi] = true;
            self.tp_preds.push(preds[pi].clone());
            self.tp_gts.push(gts[gi].clone());
        }
        for (d, hit) in preds.iter().zip(tp) {
            self.scored.entry(d.class).or_default().push((d.confidence, hit));
        }
        self.gt_total += gts.len();
        self.fused_tp += m.pairs.len();

        for frame in &rec.sensed {
            let own: Vec<Detection3D> = frame
                .detections
                .iter()
                .filter_map(|d| to_global_frame(d, &frame.ego_pose).ok())
                .collect();
            let hits = match_detections(&own, &gts, MATCH_THRESHOLD_M).pairs.len();
            *self.agent_tp.entry(frame.agent_id).or_default() += hits;
            *self.agent_gt.entry(frame.agent_id).or_default() += gts.len();
        }

        if self.rasters {
            let boxes: Vec<OrientedRect> = rec.world.actors.iter().map(|a| a.footprint()).collect();
            let gt_grid = occupancy_from_boxes(&product.fused_grid.spec, product.tick, &boxes);
            if let Ok(v) = bev_miou(&product.fused_grid, &gt_grid, OCCUPIED_THRESHOLD) {
                self.miou_sum += v;
            }
            let pred_boxes: Vec<(u32, OrientedRect)> = preds
                .iter()
                .filter_map(|d| d.track_id.map(|id| (id, d.footprint())))
                .collect();
            let gt_boxes: Vec<(u32, OrientedRect)> = rec
                .world
                .actors
                .iter()
                .filter(|a| a.id != ego_id)
                .map(|a| (a.id, a.footprint()))
                .collect();
            self.vpq_pred.push(instance_mask(&spec, &pred_boxes));
            self.vpq_gt.push(instance_mask(&spec, &gt_boxes));
        }
    }

    pub fn report(&self) -> PerceptionReport {
        let ap_per_class: BTreeMap<ObjectClass, f64> = self
            .gt_counts
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(c, &n)| {
                let scored = self.scored.get(c).map(Vec::as_slice).unwrap_or(&[]);
                (*c, pooled_average_precision(scored, n))
            })
            .collect();
        let map = if ap_per_class.is_empty() {
            None
        } else {
            Some(ap_per_class.values().sum::<f64>() / ap_per_class.len() as f64)
        };
        let pairs = MatchResult {
            pairs: (0..self.tp_preds.len()).map(|i| (i, i, 0.0)).collect(),
            ..MatchResult::default()
        };
        let tp = tp_metrics(&pairs, &self.tp_preds, &self.tp_gts);
        let ratio = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
        let agent_recall = self
            .agent_gt
            .iter()
            .filter_map(|(id, &n)| ratio(self.agent_tp.get(id).copied().unwrap_or(0), n).map(|r| (*id, r)))
            .collect();
        let rasters = self.rasters && self.ticks > 0;
        PerceptionReport {
            ticks: self.ticks,
            map,
            ap_per_class,
            tp,
            bev_miou: rasters.then(|| self.miou_sum / self.ticks as f64),
            motion_vpq: if rasters { motion_vpq(&self.vpq_pred, &self.vpq_gt).ok() } else { None },
            fused_recall: ratio(self.fused_tp, self.gt_total),
            agent_recall,
            ground_truth_objects: self.gt_total,
        }
    }

    /// Matched ground-truth objects for the fused output and for the best
    /// single node, with the total number of ground-truth objects.
    pub fn recall_counts(&self) -> (usize, usize, usize) {
        let best = self.agent_tp.values().copied().max().unwrap_or(0);
        (self.fused_tp, best, self.gt_total)
    }
}

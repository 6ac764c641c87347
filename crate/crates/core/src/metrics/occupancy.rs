//! Raster metrics: occupancy IoU and panoptic quality over instance masks.

use super::MetricError;
use crate::geom::OrientedRect;
use crate::sensing::{BevGrid, GridSpec};
use std::collections::BTreeMap;

pub const OCCUPIED_THRESHOLD: f64 = 0.65;

/// IoU of the occupied sets; 1.0 when both are empty.
pub fn bev_miou(pred: &BevGrid, gt: &BevGrid, occ_thresh: f64) -> Result<f64, MetricError> {
    if !pred.spec.same_layout(&gt.spec) || pred.cells.len() != gt.cells.len() {
        return Err(MetricError::SpecMismatch);
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, g) in pred.cells.iter().zip(&gt.cells) {
        let (p, g) = (*p >= occ_thresh, *g >= occ_thresh);
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Raster of instance ids (0 = background) from labelled footprints, tested
/// at cell centers. Later boxes overwrite earlier ones.
pub fn instance_mask(spec: &GridSpec, boxes: &[(u32, OrientedRect)]) -> Vec<u32> {
    let mut mask = vec![0u32; spec.len()];
    for (id, rect) in boxes {
        let reach = rect.circumradius();
        for row in 0..spec.cells_y {
            for col in 0..spec.cells_x {
                let c = spec.cell_center_world(col, row);
                if (c[0] - rect.center[0]).abs() > reach || (c[1] - rect.center[1]).abs() > reach {
                    continue;
                }
                if rect.contains(c) {
                    mask[row * spec.cells_x + col] = *id;
                }
            }
        }
    }
    mask
}

/// Occupancy raster (0.9 / 0.3) from footprints, for ground-truth grids.
pub fn occupancy_from_boxes(spec: &GridSpec, tick: u64, boxes: &[OrientedRect]) -> BevGrid {
    let labelled: Vec<(u32, OrientedRect)> = boxes.iter().map(|b| (1, *b)).collect();
    let mask = instance_mask(spec, &labelled);
    let mut grid = BevGrid::filled(*spec, tick, crate::sensing::P_FREE);
    for (cell, m) in grid.cells.iter_mut().zip(mask) {
        if m != 0 {
            *cell = crate::sensing::P_OCCUPIED;
        }
    }
    grid
}

fn panoptic_quality(pred: &[u32], gt: &[u32]) -> f64 {
    let mut area_p: BTreeMap<u32, usize> = BTreeMap::new();
    let mut area_g: BTreeMap<u32, usize> = BTreeMap::new();
    let mut inter: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gt) {
        if p != 0 {
            *area_p.entry(p).or_default() += 1;
        }
        if g != 0 {
            *area_g.entry(g).or_default() += 1;
        }
        if p != 0 && g != 0 {
            *inter.entry((p, g)).or_default() += 1;
        }
    }
    // IoU > 0.5 makes matches unique on both sides
    let mut iou_sum = 0.0;
    let mut tp = 0usize;
    for (&(p, g), &i) in &inter {
        let u = area_p[&p] + area_g[&g] - i;
        let iou = i as f64 / u as f64;
        if iou > 0.5 {
            iou_sum += iou;
            tp += 1;
        }
    }
    let fp = area_p.len() - tp;
    let fn_ = area_g.len() - tp;
    let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
    if denom == 0.0 {
        1.0
    } else {
        iou_sum / denom
    }
}

/// Mean per-tick panoptic quality of instance masks; 1.0 with no ticks.
pub fn motion_vpq(pred: &[Vec<u32>], gt: &[Vec<u32>]) -> Result<f64, MetricError> {
    if pred.len() != gt.len() || pred.iter().zip(gt).any(|(p, g)| p.len() != g.len()) {
        return Err(MetricError::LengthMismatch);
    }
    if pred.is_empty() {
        return Ok(1.0);
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| panoptic_quality(p, g)).sum::<f64>() / pred.len() as f64)
}

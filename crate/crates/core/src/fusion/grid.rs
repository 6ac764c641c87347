//! Frame changes and evidence combination for BEV rasters.

use super::FusionError;
use crate::geom::{wrap_angle, Pose};
use crate::sensing::{BevGrid, Detection3D, GridSpec, P_UNKNOWN};
use crate::world::ActorId;
use serde::{Deserialize, Serialize};

const P_MIN: f64 = 0.01;
const P_MAX: f64 = 0.99;
/// Absorbs round-off when a lattice point lands exactly on a cell boundary.
const INDEX_EPS: f64 = 1e-9;

/// Rigid motion of one agent between two ticks, expressed in the agent's
/// frame at `from_tick`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoMotion {
    pub agent_id: ActorId,
    pub from_tick: u64,
    pub to_tick: u64,
    pub delta: Pose,
}

impl EgoMotion {
    pub fn between(agent_id: ActorId, from_tick: u64, from: &Pose, to_tick: u64, to: &Pose) -> Self {
        Self {
            agent_id,
            from_tick,
            to_tick,
            delta: from.relative(to),
        }
    }
}

/// Expresses a detection given in the frame of `pose` in the parent frame.
pub fn to_global_frame(det: &Detection3D, pose: &Pose) -> Result<Detection3D, FusionError> {
    if !pose.is_finite() || !det.center.iter().all(|v| v.is_finite()) || !det.yaw.is_finite() {
        return Err(FusionError::Validation("non-finite pose or detection".into()));
    }
    let mut out = det.clone();
    out.center = pose.transform_point(det.center);
    out.yaw = wrap_angle(det.yaw + pose.yaw);
    Ok(out)
}

/// Nearest-neighbor resample of `source` onto `target`'s anchor pose.
///
/// Cell `(c, r)` of the target is represented by its lattice point
/// `((c - cells_x/2)·res, (r - cells_y/2)·res)`; points that fall outside the
/// source raster become unknown.
pub fn resample(source: &BevGrid, target: &GridSpec, tick: u64) -> BevGrid {
    let mut out = BevGrid::unknown(*target, tick);
    if source.spec == *target {
        out.cells.clone_from(&source.cells);
        return out;
    }
    let half_x = target.cells_x as f64 / 2.0;
    let half_y = target.cells_y as f64 / 2.0;
    let res = target.resolution_m_per_cell;
    for row in 0..target.cells_y {
        for col in 0..target.cells_x {
            let p = [(col as f64 - half_x) * res, (row as f64 - half_y) * res];
            let world = target.origin.transform_point(p);
            let q = source.spec.origin.inverse_transform_point(world);
            let value = source
                .spec
                .index_of(q, INDEX_EPS)
                .map(|(c, r)| source.get(c, r))
                .unwrap_or(P_UNKNOWN);
            out.set(col, row, value);
        }
    }
    out
}

/// Re-expresses a past grid in the agent's frame at `motion.to_tick`.
pub fn ego_align(past: &BevGrid, motion: &EgoMotion) -> Result<BevGrid, FusionError> {
    if motion.from_tick != past.tick || motion.to_tick <= motion.from_tick {
        return Err(FusionError::TickMismatch {
            grid_tick: past.tick,
            from_tick: motion.from_tick,
            to_tick: motion.to_tick,
        });
    }
    if !motion.delta.is_finite() {
        return Err(FusionError::Validation("non-finite ego motion".into()));
    }
    if motion.delta == Pose::default() {
        let mut out = past.clone();
        out.tick = motion.to_tick;
        return Ok(out);
    }
    let target = past.spec.with_origin(past.spec.origin.compose(&motion.delta));
    Ok(resample(past, &target, motion.to_tick))
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(P_MIN, P_MAX);
    (p / (1.0 - p)).ln()
}

fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Per-cell log-odds sum of independent occupancy evidence.
pub fn fuse_grids(grids: &[BevGrid]) -> Result<BevGrid, FusionError> {
    let first = grids.first().ok_or(FusionError::EmptyInput)?;
    if grids.iter().any(|g| g.spec != first.spec || g.cells.len() != first.cells.len()) {
        return Err(FusionError::SpecMismatch);
    }
    let tick = grids.iter().map(|g| g.tick).max().unwrap_or(first.tick);
    let mut out = BevGrid::unknown(first.spec, tick);
    let mut terms = Vec::with_capacity(grids.len());
    for (i, cell) in out.cells.iter_mut().enumerate() {
        terms.clear();
        terms.extend(grids.iter().map(|g| logit(g.cells[i])));
        // summing in sorted order makes the result independent of input order
        terms.sort_by(f64::total_cmp);
        let l: f64 = terms.iter().sum();
        *cell = sigmoid(l);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ObjectClass;
    use std::f64::consts::PI;

    fn spec() -> GridSpec {
        GridSpec::default()
    }

    #[test]
    fn global_frame_transform() {
        let det = Detection3D {
            class: ObjectClass::Car,
            center: [1.0, 0.0],
            yaw: 0.0,
            length: 4.0,
            width: 2.0,
            confidence: 0.9,
            speed: 0.0,
            violation: false,
            peripheral: false,
            track_id: None,
        };
        assert_eq!(to_global_frame(&det, &Pose::default()).unwrap(), det);
        let g = to_global_frame(&det, &Pose::new(5.0, 0.0, PI / 2.0)).unwrap();
        assert!((g.center[0] - 5.0).abs() < 1e-12 && (g.center[1] - 1.0).abs() < 1e-12);
        assert!((g.yaw - PI / 2.0).abs() < 1e-12);
        assert!(matches!(
            to_global_frame(&det, &Pose::new(f64::NAN, 0.0, 0.0)),
            Err(FusionError::Validation(_))
        ));
    }

    fn marked(col: usize, row: usize) -> BevGrid {
        let mut g = BevGrid::filled(spec(), 3, 0.3);
        g.set(col, row, 0.9);
        g
    }

    #[test]
    fn zero_motion_is_identity() {
        let g = marked(12, 77);
        let m = EgoMotion {
            agent_id: 1,
            from_tick: 3,
            to_tick: 4,
            delta: Pose::default(),
        };
        let out = ego_align(&g, &m).unwrap();
        assert_eq!(out.cells, g.cells);
        assert_eq!(out.tick, 4);
    }

    #[test]
    fn forward_translation_shifts_columns() {
        let mut g = BevGrid::filled(spec(), 3, 0.3);
        for row in 0..100 {
            for col in 0..100 {
                g.set(col, row, (col as f64) / 200.0 + 0.2);
            }
        }
        let m = EgoMotion {
            agent_id: 1,
            from_tick: 3,
            to_tick: 4,
            delta: Pose::new(1.0, 0.0, 0.0),
        };
        let out = ego_align(&g, &m).unwrap();
        for row in [0, 50, 99] {
            for col in 0..98 {
                assert_eq!(out.get(col, row), g.get(col + 2, row));
            }
            assert_eq!(out.get(98, row), P_UNKNOWN);
            assert_eq!(out.get(99, row), P_UNKNOWN);
        }
    }

    #[test]
    fn half_turn_relocates_cell() {
        let g = marked(60, 50);
        let m = EgoMotion {
            agent_id: 1,
            from_tick: 3,
            to_tick: 5,
            delta: Pose::new(0.0, 0.0, PI),
        };
        let out = ego_align(&g, &m).unwrap();
        assert_eq!(out.get(40, 50), 0.9);
        assert_eq!(out.cells.iter().filter(|&&p| p == 0.9).count(), 1);
    }

    #[test]
    fn tick_mismatch() {
        let g = marked(1, 1);
        let m = EgoMotion {
            agent_id: 1,
            from_tick: 2,
            to_tick: 4,
            delta: Pose::default(),
        };
        assert!(matches!(ego_align(&g, &m), Err(FusionError::TickMismatch { .. })));
    }

    #[test]
    fn log_odds_fusion() {
        let half = BevGrid::filled(spec(), 0, 0.5);
        let out = fuse_grids(&[half.clone(), half.clone()]).unwrap();
        assert!(out.cells.iter().all(|&p| p == 0.5));
        let strong = BevGrid::filled(spec(), 0, 0.8);
        let out = fuse_grids(&[strong.clone(), strong]).unwrap();
        assert!((out.cells[0] - 16.0 / 17.0).abs() < 1e-12);
        assert_eq!(fuse_grids(&[]), Err(FusionError::EmptyInput));
        let other = BevGrid::filled(spec().with_origin(Pose::new(1.0, 0.0, 0.0)), 0, 0.5);
        assert_eq!(fuse_grids(&[half, other]), Err(FusionError::SpecMismatch));
    }

    #[test]
    fn saturated_cells_are_clamped() {
        let sure = BevGrid::filled(spec(), 0, 1.0);
        let out = fuse_grids(&[sure]).unwrap();
        assert!((out.cells[0] - 0.99).abs() < 1e-12);
    }
}

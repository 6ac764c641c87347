//! Motion head: trajectory rollout and pairwise time-to-collision.

use super::tracking::Track;
use crate::world::ObjectClass;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MotionModel {
    /// Constant velocity.
    #[default]
    Cv,
    /// Constant turn rate and velocity.
    Ctrv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryForecast {
    pub track_id: u32,
    pub class: ObjectClass,
    /// Position at the current tick (t = 0).
    pub origin: [f64; 2],
    /// `(t_s, x, y)` starting one step after the current tick.
    pub points: Vec<[f64; 3]>,
    pub model: MotionModel,
}

impl TrajectoryForecast {
    /// Position at knot `k` (0 = origin).
    fn knot(&self, k: usize) -> (f64, [f64; 2]) {
        if k == 0 {
            (0.0, self.origin)
        } else {
            let p = self.points[k - 1];
            (p[0], [p[1], p[2]])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionPrediction {
    pub track_a: u32,
    pub track_b: u32,
    pub ttc_s: f64,
    pub closest_point: [f64; 2],
}

pub fn forecast_track(track: &Track, horizon_s: f64, dt_s: f64, model: MotionModel) -> TrajectoryForecast {
    let steps = if dt_s > 0.0 && horizon_s > 0.0 {
        (horizon_s / dt_s + 1e-9).floor() as usize
    } else {
        0
    };
    let [x0, y0] = track.position;
    let speed = track.velocity[0].hypot(track.velocity[1]);
    let heading = if speed > 1e-9 {
        track.velocity[1].atan2(track.velocity[0])
    } else {
        track.yaw
    };
    let omega = track.yaw_rate;
    let points = (1..=steps)
        .map(|k| {
            let t = k as f64 * dt_s;
            let (x, y) = match model {
                MotionModel::Ctrv if omega.abs() > 1e-6 => {
                    let r = speed / omega;
                    (
                        x0 + r * ((heading + omega * t).sin() - heading.sin()),
                        y0 + r * (heading.cos() - (heading + omega * t).cos()),
                    )
                }
                _ => (x0 + track.velocity[0] * t, y0 + track.velocity[1] * t),
            };
            [t, x, y]
        })
        .collect();
    TrajectoryForecast {
        track_id: track.track_id,
        class: track.class,
        origin: track.position,
        points,
        model,
    }
}

pub fn forecast_trajectories(tracks: &[Track], horizon_s: f64, dt_s: f64, model: MotionModel) -> Vec<TrajectoryForecast> {
    tracks
        .iter()
        .map(|t| forecast_track(t, horizon_s, dt_s, model))
        .collect()
}

/// Collision radius per class: half the default footprint diagonal.
pub fn default_radii() -> BTreeMap<ObjectClass, f64> {
    ObjectClass::ALL
        .iter()
        .map(|c| {
            let (l, w) = c.default_footprint();
            (*c, l.hypot(w) / 2.0)
        })
        .collect()
}

/// Earliest contact time of two piecewise-linear trajectories within
/// `radius`, together with the contact midpoint.
fn first_contact(a: &TrajectoryForecast, b: &TrajectoryForecast, radius: f64, horizon_s: f64) -> Option<(f64, [f64; 2])> {
    let r2 = radius * radius;
    let knots = a.points.len().min(b.points.len());
    let (_, a0) = a.knot(0);
    let (_, b0) = b.knot(0);
    let d0 = [b0[0] - a0[0], b0[1] - a0[1]];
    if d0[0] * d0[0] + d0[1] * d0[1] <= r2 {
        return Some((0.0, midpoint(a0, b0)));
    }
    for k in 1..=knots {
        let (t0, pa0) = a.knot(k - 1);
        let (t1, pa1) = a.knot(k);
        let (_, pb0) = b.knot(k - 1);
        let (_, pb1) = b.knot(k);
        if t0 > horizon_s {
            break;
        }
        let start = [pb0[0] - pa0[0], pb0[1] - pa0[1]];
        let end = [pb1[0] - pa1[0], pb1[1] - pa1[1]];
        let e = [end[0] - start[0], end[1] - start[1]];
        let qa = e[0] * e[0] + e[1] * e[1];
        let qb = 2.0 * (start[0] * e[0] + start[1] * e[1]);
        let qc = start[0] * start[0] + start[1] * start[1] - r2;
        let s = if qc <= 0.0 {
            0.0
        } else if qa <= 1e-15 {
            continue;
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                continue;
            }
            let s = (-qb - disc.sqrt()) / (2.0 * qa);
            if !(0.0..=1.0).contains(&s) {
                continue;
            }
            s
        };
        let t = t0 + s * (t1 - t0);
        if t > horizon_s {
            return None;
        }
        let pa = [pa0[0] + (pa1[0] - pa0[0]) * s, pa0[1] + (pa1[1] - pa0[1]) * s];
        let pb = [pb0[0] + (pb1[0] - pb0[0]) * s, pb0[1] + (pb1[1] - pb0[1]) * s];
        return Some((t, midpoint(pa, pb)));
    }
    None
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Pairwise earliest contact within `horizon_s`; each pair reported once with
/// `track_a < track_b`.
pub fn predict_collisions(
    forecasts: &[TrajectoryForecast],
    radii_by_class: &BTreeMap<ObjectClass, f64>,
    horizon_s: f64,
) -> Vec<CollisionPrediction> {
    let mut ordered: Vec<&TrajectoryForecast> = forecasts.iter().collect();
    ordered.sort_by_key(|f| f.track_id);
    let radius = |c: ObjectClass| radii_by_class.get(&c).copied().unwrap_or(0.0);
    let mut out = Vec::new();
    for (i, a) in ordered.iter().enumerate() {
        for b in &ordered[i + 1..] {
            if a.track_id == b.track_id {
                continue;
            }
            if let Some((ttc, point)) = first_contact(a, b, radius(a.class) + radius(b.class), horizon_s) {
                out.push(CollisionPrediction {
                    track_a: a.track_id,
                    track_b: b.track_id,
                    ttc_s: ttc,
                    closest_point: point,
                });
            }
        }
    }
    out
}

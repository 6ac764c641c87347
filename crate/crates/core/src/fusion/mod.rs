//! Cooperative perception: common-frame transforms, temporal alignment,
//! occupancy fusion and the detection, tracking and motion heads.

mod assoc;
mod forecast;
mod grid;
mod tracking;

pub use assoc::associate_and_merge;
pub use forecast::{
    default_radii, forecast_track, forecast_trajectories, predict_collisions, CollisionPrediction, MotionModel,
    TrajectoryForecast,
};
pub use grid::{ego_align, fuse_grids, resample, to_global_frame, EgoMotion};
pub use tracking::{update_tracks, Track, Tracker, TrackerConfig};

use crate::geom::{distance, OrientedRect, Pose};
use crate::sensing::{BevGrid, Detection3D, GridSpec, SensorFrame};
use crate::world::{ActorId, ObjectClass};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

/// Track id reserved for the ego vehicle's own odometry track.
pub const EGO_TRACK_ID: u32 = 0;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("grid tick {grid_tick} does not match motion {from_tick}->{to_tick}")]
    TickMismatch { grid_tick: u64, from_tick: u64, to_tick: u64 },
    #[error("no input to fuse")]
    EmptyInput,
    #[error("grid specs differ")]
    SpecMismatch,
}

/// Everything the three heads produce for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionProduct {
    pub tick: u64,
    pub ego_id: ActorId,
    pub ego_pose: Pose,
    pub fused_grid: BevGrid,
    /// World-frame merged detections (ego excluded).
    pub detections: Vec<Detection3D>,
    /// Live tracks including the ego odometry track.
    pub tracks: Vec<Track>,
    pub forecasts: Vec<TrajectoryForecast>,
    pub collisions: Vec<CollisionPrediction>,
    /// Agents whose frames contributed.
    pub contributors: Vec<ActorId>,
}

impl PerceptionProduct {
    pub fn track(&self, id: u32) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == id)
    }

    pub fn collision(&self, a: u32, b: u32) -> Option<&CollisionPrediction> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.collisions.iter().find(|c| c.track_a == lo && c.track_b == hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadsConfig {
    /// Layout of the fused raster; its origin follows the ego pose.
    pub grid: GridSpec,
    pub merge_gate_m: f64,
    pub tracker: TrackerConfig,
    pub horizon_s: f64,
    pub model: MotionModel,
    /// Past ticks re-aligned and fused with the current evidence.
    pub temporal_window: usize,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            merge_gate_m: 2.0,
            tracker: TrackerConfig::default(),
            horizon_s: 5.0,
            model: MotionModel::Cv,
            temporal_window: 3,
        }
    }
}

/// The ego vehicle as known from its own odometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub id: ActorId,
    pub class: ObjectClass,
    pub pose: Pose,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

/// Frames gathered for one tick plus the ego state at that tick.
#[derive(Debug, Clone)]
pub struct HeadsInput {
    pub tick: u64,
    pub dt_s: f64,
    pub ego: EgoState,
    pub frames: Vec<SensorFrame>,
}

struct PastEvidence {
    tick: u64,
    pose: Pose,
    grid: BevGrid,
}

/// Single-consumer fusion center holding tracker state and the temporal window.
pub struct FusionCenter {
    pub config: HeadsConfig,
    tracker: Tracker,
    history: VecDeque<PastEvidence>,
    radii: BTreeMap<ObjectClass, f64>,
}

impl FusionCenter {
    pub fn new(config: HeadsConfig) -> Self {
        Self {
            tracker: Tracker::new(config.tracker),
            config,
            history: VecDeque::new(),
            radii: default_radii(),
        }
    }

    pub fn tracks(&self) -> &[Track] {
        self.tracker.tracks()
    }

    /// to_global_frame → ego_align → fuse_grids → associate_and_merge →
    /// update_tracks → forecast_trajectories → predict_collisions.
    pub fn run_heads(&mut self, input: HeadsInput) -> Result<PerceptionProduct, FusionError> {
        if input.frames.is_empty() {
            return Err(FusionError::EmptyInput);
        }
        let ego = input.ego;
        if !ego.pose.is_finite() {
            return Err(FusionError::Validation("non-finite ego pose".into()));
        }
        let spec = self.config.grid.with_origin(ego.pose);

        let mut detections = Vec::new();
        let mut current = Vec::with_capacity(input.frames.len());
        let mut contributors = Vec::with_capacity(input.frames.len());
        for frame in &input.frames {
            for det in &frame.detections {
                detections.push(to_global_frame(det, &frame.ego_pose)?);
            }
            let mut local = frame.local_grid.clone();
            local.spec.origin = frame.ego_pose;
            if !local.spec.same_layout(&spec) {
                return Err(FusionError::SpecMismatch);
            }
            current.push(resample(&local, &spec, input.tick));
            contributors.push(frame.agent_id);
        }
        let evidence = fuse_grids(&current)?;

        let mut layers = current;
        for past in self.history.iter().filter(|p| p.tick < input.tick) {
            let motion = EgoMotion::between(ego.id, past.tick, &past.pose, input.tick, &ego.pose);
            layers.push(ego_align(&past.grid, &motion)?);
        }
        let fused_grid = fuse_grids(&layers)?;

        self.history.push_back(PastEvidence {
            tick: input.tick,
            pose: ego.pose,
            grid: evidence,
        });
        while self.history.len() > self.config.temporal_window {
            self.history.pop_front();
        }

        let ego_rect = OrientedRect::new(ego.pose.position(), ego.pose.yaw, ego.length, ego.width);
        detections.retain(|d| !ego_rect.contains(d.center));
        let mut merged = associate_and_merge(&detections, self.config.merge_gate_m);
        let ids = self.tracker.update(&merged, input.tick, input.dt_s);
        for (det, id) in merged.iter_mut().zip(ids) {
            det.track_id = Some(id);
            det.peripheral = !spec.contains_world(det.center);
            if let Some(t) = self.tracker.tracks().iter().find(|t| t.track_id == id) {
                det.speed = t.speed;
            }
        }

        let (s, c) = ego.pose.yaw.sin_cos();
        let ego_track = Track {
            track_id: EGO_TRACK_ID,
            class: ego.class,
            position: ego.pose.position(),
            velocity: [ego.speed * c, ego.speed * s],
            yaw: ego.pose.yaw,
            speed: ego.speed,
            yaw_rate: 0.0,
            length: ego.length,
            width: ego.width,
            history: vec![(input.tick, ego.pose.position())],
            age: 0,
            violation: false,
        };
        let mut tracks = vec![ego_track];
        tracks.extend(self.tracker.tracks().iter().filter(|t| t.age == 0).cloned());
        let forecasts = forecast_trajectories(&tracks, self.config.horizon_s, input.dt_s, self.config.model);
        let collisions = predict_collisions(&forecasts, &self.radii, self.config.horizon_s);

        Ok(PerceptionProduct {
            tick: input.tick,
            ego_id: ego.id,
            ego_pose: ego.pose,
            fused_grid,
            detections: merged,
            tracks,
            forecasts,
            collisions,
            contributors,
        })
    }
}

/// Distance from the ego to the nearest non-peripheral detection.
pub fn nearest_detection(product: &PerceptionProduct) -> Option<(u32, f64)> {
    product
        .detections
        .iter()
        .filter(|d| !d.peripheral)
        .map(|d| (d.track_id.unwrap_or(u32::MAX), distance(d.center, product.ego_pose.position())))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

//! Parametric camera-rig model: FoV and occlusion gating, noisy detections and
//! the three-valued local BEV raster each agent ships to the fusion center.

use crate::geom::{distance, wrap_angle, OrientedRect, Pose};
use crate::world::{ActorId, ActorState, ObjectClass, WorldState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const P_OCCUPIED: f64 = 0.9;
pub const P_FREE: f64 = 0.3;
pub const P_UNKNOWN: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SensingError {
    #[error("point ({0}, {1}) lies outside the grid")]
    OutOfGrid(f64, f64),
    #[error("invalid grid: {0}")]
    Validation(String),
}

fn d_max_range() -> f64 {
    60.0
}
fn d_cameras() -> u32 {
    6
}
fn d_fov() -> f64 {
    60.0
}
fn d_sigma_base() -> f64 {
    0.2
}
fn d_sigma_coeff() -> f64 {
    1.0 / 20.0
}
fn d_sigma_yaw() -> f64 {
    0.05
}
fn d_drop() -> f64 {
    0.05
}
fn d_fp_rate() -> f64 {
    0.1
}

/// Surround camera rig and its error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default = "d_max_range")]
    pub max_range_m: f64,
    /// Cameras are spread evenly around the body, the first facing forward.
    #[serde(default = "d_cameras")]
    pub camera_count: u32,
    #[serde(default = "d_fov")]
    pub fov_deg: f64,
    #[serde(default = "d_sigma_base")]
    pub sigma_pos_base_m: f64,
    #[serde(default = "d_sigma_coeff")]
    pub sigma_pos_range_coeff: f64,
    #[serde(default = "d_sigma_yaw")]
    pub sigma_yaw_rad: f64,
    #[serde(default = "d_drop")]
    pub drop_prob: f64,
    #[serde(default = "d_fp_rate")]
    pub false_pos_rate_per_frame: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            max_range_m: d_max_range(),
            camera_count: d_cameras(),
            fov_deg: d_fov(),
            sigma_pos_base_m: d_sigma_base(),
            sigma_pos_range_coeff: d_sigma_coeff(),
            sigma_yaw_rad: d_sigma_yaw(),
            drop_prob: d_drop(),
            false_pos_rate_per_frame: d_fp_rate(),
        }
    }
}

impl SensorConfig {
    /// Perfect sensing: no noise, no drops, no clutter.
    pub fn noiseless() -> Self {
        Self {
            sigma_pos_base_m: 0.0,
            sigma_pos_range_coeff: 0.0,
            sigma_yaw_rad: 0.0,
            drop_prob: 0.0,
            false_pos_rate_per_frame: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let values = [
            self.max_range_m,
            self.fov_deg,
            self.sigma_pos_base_m,
            self.sigma_pos_range_coeff,
            self.sigma_yaw_rad,
            self.drop_prob,
            self.false_pos_rate_per_frame,
        ];
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("sensor parameters must be finite and non-negative".into());
        }
        if self.drop_prob > 1.0 {
            return Err("drop_prob must be in [0, 1]".into());
        }
        if self.camera_count as f64 * self.fov_deg > 360.0 + 1e-9 {
            return Err("camera coverage exceeds 360 degrees".into());
        }
        Ok(())
    }

    /// Whether a bearing (radians, sensor frame) falls inside some camera.
    pub fn bearing_covered(&self, bearing: f64) -> bool {
        if self.camera_count == 0 {
            return false;
        }
        let half = self.fov_deg.to_radians() / 2.0;
        let step = std::f64::consts::TAU / self.camera_count as f64;
        (0..self.camera_count).any(|i| wrap_angle(bearing - i as f64 * step).abs() <= half + 1e-12)
    }

    pub fn confidence_at(&self, range: f64) -> f64 {
        if self.max_range_m <= 0.0 {
            return 0.05;
        }
        (1.0 - range / self.max_range_m).clamp(0.05, 1.0)
    }

    pub fn sigma_at(&self, range: f64) -> f64 {
        self.sigma_pos_base_m * (1.0 + range * self.sigma_pos_range_coeff)
    }
}

/// BEV raster geometry. Cell `(cells_x/2, cells_y/2)` sits at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cells_x: usize,
    pub cells_y: usize,
    pub resolution_m_per_cell: f64,
    pub origin: Pose,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cells_x: 100,
            cells_y: 100,
            resolution_m_per_cell: 0.5,
            origin: Pose::default(),
        }
    }
}

impl GridSpec {
    pub fn with_origin(mut self, origin: Pose) -> Self {
        self.origin = origin;
        self
    }

    pub fn validate(&self) -> Result<(), SensingError> {
        if self.cells_x == 0 || self.cells_y == 0 {
            return Err(SensingError::Validation("grid dimensions must be positive".into()));
        }
        if !(self.resolution_m_per_cell > 0.0 && self.resolution_m_per_cell.is_finite()) {
            return Err(SensingError::Validation(format!(
                "resolution must be positive, got {}",
                self.resolution_m_per_cell
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cells_x * self.cells_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn half_extent(&self) -> [f64; 2] {
        [
            self.cells_x as f64 * self.resolution_m_per_cell / 2.0,
            self.cells_y as f64 * self.resolution_m_per_cell / 2.0,
        ]
    }

    /// Cell containing a world point.
    pub fn world_to_cell(&self, p: [f64; 2]) -> Result<(usize, usize), SensingError> {
        self.local_to_cell(self.origin.inverse_transform_point(p))
            .ok_or(SensingError::OutOfGrid(p[0], p[1]))
    }

    /// Cell containing a point given in the grid frame.
    pub fn local_to_cell(&self, q: [f64; 2]) -> Option<(usize, usize)> {
        self.index_of(q, 0.0)
    }

    /// Continuous-to-index mapping with a tolerance added before `floor`.
    pub(crate) fn index_of(&self, q: [f64; 2], eps: f64) -> Option<(usize, usize)> {
        if !(q[0].is_finite() && q[1].is_finite()) {
            return None;
        }
        let col = (self.cells_x as f64 / 2.0 + q[0] / self.resolution_m_per_cell + eps).floor();
        let row = (self.cells_y as f64 / 2.0 + q[1] / self.resolution_m_per_cell + eps).floor();
        if col < 0.0 || row < 0.0 || col >= self.cells_x as f64 || row >= self.cells_y as f64 {
            return None;
        }
        Some((col as usize, row as usize))
    }

    /// Grid-frame center of a cell.
    pub fn cell_center_local(&self, col: usize, row: usize) -> [f64; 2] {
        [
            (col as f64 + 0.5 - self.cells_x as f64 / 2.0) * self.resolution_m_per_cell,
            (row as f64 + 0.5 - self.cells_y as f64 / 2.0) * self.resolution_m_per_cell,
        ]
    }

    pub fn cell_center_world(&self, col: usize, row: usize) -> [f64; 2] {
        self.origin.transform_point(self.cell_center_local(col, row))
    }

    /// Whether a world point lies inside the raster extent.
    pub fn contains_world(&self, p: [f64; 2]) -> bool {
        self.world_to_cell(p).is_ok()
    }

    /// Same raster layout (dims and resolution), ignoring the anchor pose.
    pub fn same_layout(&self, other: &GridSpec) -> bool {
        self.cells_x == other.cells_x
            && self.cells_y == other.cells_y
            && self.resolution_m_per_cell == other.resolution_m_per_cell
    }
}

pub fn world_to_cell(p: [f64; 2], spec: &GridSpec) -> Result<(usize, usize), SensingError> {
    spec.world_to_cell(p)
}

/// Occupancy probabilities, row-major (`row * cells_x + col`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevGrid {
    pub spec: GridSpec,
    pub tick: u64,
    pub cells: Vec<f64>,
}

impl BevGrid {
    pub fn filled(spec: GridSpec, tick: u64, p: f64) -> Self {
        Self {
            spec,
            tick,
            cells: vec![p; spec.len()],
        }
    }

    pub fn unknown(spec: GridSpec, tick: u64) -> Self {
        Self::filled(spec, tick, P_UNKNOWN)
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.spec.cells_x + col]
    }

    pub fn set(&mut self, col: usize, row: usize, p: f64) {
        self.cells[row * self.spec.cells_x + col] = p;
    }
}

/// One detected object. `center`/`yaw` are in whichever frame the holder
/// documents (agent frame inside a [`SensorFrame`], world frame after fusion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection3D {
    pub class: ObjectClass,
    pub center: [f64; 2],
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
    pub confidence: f64,
    /// Estimated speed; single frames cannot observe it and leave 0.
    #[serde(default)]
    pub speed: f64,
    /// Scripted rule violation observed on the object.
    #[serde(default)]
    pub violation: bool,
    /// Outside the fused raster extent.
    #[serde(default)]
    pub peripheral: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<u32>,
}

impl Detection3D {
    pub fn footprint(&self) -> OrientedRect {
        OrientedRect::new(self.center, self.yaw, self.length, self.width)
    }

    pub fn from_actor(actor: &ActorState, confidence: f64) -> Self {
        Self {
            class: actor.kind,
            center: actor.position,
            yaw: actor.yaw,
            length: actor.length,
            width: actor.width,
            confidence,
            speed: actor.speed,
            violation: actor.violation,
            peripheral: false,
            track_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub agent_id: ActorId,
    pub tick: u64,
    pub ego_pose: Pose,
    /// Agent-frame detections.
    pub detections: Vec<Detection3D>,
    pub local_grid: BevGrid,
}

/// A sensing node: an agent vehicle or an RSU.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingAgent {
    pub id: ActorId,
    pub pose: Pose,
    pub config: SensorConfig,
}

/// Line-of-sight test from `origin` to the target's center.
pub fn visible(origin: &Pose, target: &ActorState, occluders: &[OrientedRect], cfg: &SensorConfig) -> bool {
    let range = distance(origin.position(), target.position);
    if range > cfg.max_range_m {
        return false;
    }
    let local = origin.inverse_transform_point(target.position);
    let bearing = local[1].atan2(local[0]);
    if range > 1e-9 && !cfg.bearing_covered(bearing) {
        return false;
    }
    !occluders
        .iter()
        .any(|o| o.intersects_segment(origin.position(), target.position))
}

/// Actors at least one of `agents` has line of sight to, ignoring noise and
/// drops.
pub fn observable_ids(world: &WorldState, agents: &[SensingAgent]) -> BTreeSet<ActorId> {
    let footprints: Vec<(ActorId, OrientedRect)> = world.actors.iter().map(|a| (a.id, a.footprint())).collect();
    let mut seen = BTreeSet::new();
    for target in &world.actors {
        let hit = agents.iter().filter(|g| g.id != target.id).any(|g| {
            let occluders: Vec<OrientedRect> = footprints
                .iter()
                .filter(|(id, _)| *id != g.id && *id != target.id)
                .map(|(_, r)| *r)
                .collect();
            visible(&g.pose, target, &occluders, &g.config)
        });
        if hit {
            seen.insert(target.id);
        }
    }
    seen
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator per `(seed, tick, stream)`.
pub fn derive_rng(seed: u64, tick: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ tick) ^ stream.rotate_left(32)))
}

/// Produces one agent's detections and local raster for the current tick.
pub fn sense_frame(world: &WorldState, agent: &SensingAgent, grid: &GridSpec, seed: u64) -> SensorFrame {
    let mut rng = derive_rng(seed, world.tick, agent.id as u64);
    let cfg = &agent.config;
    let pose = agent.pose;
    let mut detections = Vec::new();

    let footprints: Vec<(ActorId, OrientedRect)> = world
        .actors
        .iter()
        .map(|a| (a.id, a.footprint()))
        .collect();

    for target in world.actors.iter().filter(|a| a.id != agent.id) {
        let occluders: Vec<OrientedRect> = footprints
            .iter()
            .filter(|(id, _)| *id != agent.id && *id != target.id)
            .map(|(_, r)| *r)
            .collect();
        if !visible(&pose, target, &occluders, cfg) {
            continue;
        }
        if cfg.drop_prob > 0.0 && rng.random::<f64>() < cfg.drop_prob {
            continue;
        }
        let range = distance(pose.position(), target.position);
        let mut local = pose.inverse_transform_point(target.position);
        let sigma = cfg.sigma_at(range);
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            local[0] += n.sample(&mut rng);
            local[1] += n.sample(&mut rng);
        }
        let mut yaw = target.yaw - pose.yaw;
        if cfg.sigma_yaw_rad > 0.0 {
            yaw += Normal::new(0.0, cfg.sigma_yaw_rad).expect("finite sigma").sample(&mut rng);
        }
        detections.push(Detection3D {
            class: target.kind,
            center: local,
            yaw: wrap_angle(yaw),
            length: target.length,
            width: target.width,
            confidence: cfg.confidence_at(range),
            speed: 0.0,
            violation: target.violation,
            peripheral: false,
            track_id: None,
        });
    }

    if cfg.false_pos_rate_per_frame > 0.0 && cfg.camera_count > 0 && cfg.max_range_m > 1.0 {
        let clutter = Poisson::new(cfg.false_pos_rate_per_frame)
            .expect("positive rate")
            .sample(&mut rng) as usize;
        let step = std::f64::consts::TAU / cfg.camera_count as f64;
        let half = cfg.fov_deg.to_radians() / 2.0;
        for _ in 0..clutter {
            let cam = rng.random_range(0..cfg.camera_count) as f64;
            let bearing = cam * step + rng.random_range(-half..=half);
            let range = rng.random_range(1.0..=cfg.max_range_m);
            let (l, w) = ObjectClass::Car.default_footprint();
            detections.push(Detection3D {
                class: ObjectClass::Car,
                center: [range * bearing.cos(), range * bearing.sin()],
                yaw: wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                length: l,
                width: w,
                confidence: cfg.confidence_at(range),
                speed: 0.0,
                violation: false,
                peripheral: false,
                track_id: None,
            });
        }
    }

    let mut frame = SensorFrame {
        agent_id: agent.id,
        tick: world.tick,
        ego_pose: pose,
        detections,
        local_grid: BevGrid::unknown(grid.with_origin(pose), world.tick),
    };
    frame.local_grid = rasterize_local_bev(&frame, cfg, &grid.with_origin(pose))
        .expect("grid spec validated by caller");
    frame
}

/// Three-valued raster: 0.9 under detections, 0.3 for observed free space,
/// 0.5 for cells outside the FoV or shadowed by a detection.
pub fn rasterize_local_bev(frame: &SensorFrame, cfg: &SensorConfig, spec: &GridSpec) -> Result<BevGrid, SensingError> {
    spec.validate()?;
    let mut grid = BevGrid::unknown(*spec, frame.tick);
    let rects: Vec<(OrientedRect, f64)> = frame
        .detections
        .iter()
        .map(|d| {
            let r = d.footprint();
            (r, distance([0.0, 0.0], d.center) - r.circumradius())
        })
        .collect();
    for row in 0..spec.cells_y {
        for col in 0..spec.cells_x {
            let world = spec.cell_center_world(col, row);
            let q = frame.ego_pose.inverse_transform_point(world);
            if rects.iter().any(|(r, _)| r.contains(q)) {
                grid.set(col, row, P_OCCUPIED);
                continue;
            }
            let range = q[0].hypot(q[1]);
            if range > cfg.max_range_m || !cfg.bearing_covered(q[1].atan2(q[0])) {
                continue;
            }
            let shadowed = rects
                .iter()
                .any(|(r, near)| range > *near && r.intersects_segment([0.0, 0.0], q));
            if !shadowed {
                grid.set(col, row, P_FREE);
            }
        }
    }
    Ok(grid)
}

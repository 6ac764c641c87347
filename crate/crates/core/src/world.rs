//! Deterministic kinematic traffic world: scenario documents, stepping and
//! footprint collision checks.

use crate::geom::{distance, OrientedRect, Pose};
use crate::sensing::SensorConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub type ActorId = u32;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("scenario schema error: {0}")]
    Schema(String),
    #[error("scenario validation error: {0}")]
    Validation(String),
    #[error("end of scenario at tick {0}")]
    EndOfScenario(u64),
}

/// Object class taxonomy shared by ground truth and detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Car,
    Truck,
    Van,
    Pedestrian,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 4] = [
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::Van,
        ObjectClass::Pedestrian,
    ];

    /// Default footprint (length, width) in meters.
    pub fn default_footprint(self) -> (f64, f64) {
        match self {
            ObjectClass::Car => (4.0, 2.0),
            ObjectClass::Truck => (8.0, 2.5),
            ObjectClass::Van => (5.0, 2.0),
            ObjectClass::Pedestrian => (0.6, 0.6),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ObjectClass::Car => 0,
            ObjectClass::Truck => 1,
            ObjectClass::Van => 2,
            ObjectClass::Pedestrian => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Car => "Car",
            ObjectClass::Truck => "Truck",
            ObjectClass::Van => "Van",
            ObjectClass::Pedestrian => "Pedestrian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub id: ActorId,
    pub kind: ObjectClass,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub speed: f64,
    /// `[t_s, speed]` breakpoints, linearly interpolated; `speed` applies
    /// before the first breakpoint and the last value holds afterwards.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub speed_profile: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Vehicle carries surround cameras and a V2X radio.
    #[serde(default)]
    pub agent: bool,
    /// Scripted traffic-rule violation (e.g. red-light running).
    #[serde(default)]
    pub violation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorConfig>,
}

impl ActorSpec {
    pub fn footprint(&self) -> (f64, f64) {
        let (l, w) = self.kind.default_footprint();
        (self.length.unwrap_or(l), self.width.unwrap_or(w))
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let profile = &self.speed_profile;
        match profile.first() {
            None => self.speed,
            Some(first) if t < first[0] => self.speed,
            Some(_) => {
                for pair in profile.windows(2) {
                    let [t0, v0] = pair[0];
                    let [t1, v1] = pair[1];
                    if t < t1 {
                        let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                        return v0 + (v1 - v0) * f;
                    }
                }
                profile[profile.len() - 1][1]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsuSpec {
    pub id: ActorId,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorConfig>,
}

impl RsuSpec {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.yaw)
    }
}

/// A driver utterance injected at a given tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedQuery {
    pub tick: u64,
    pub text: String,
}

fn default_extent() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub duration_s: f64,
    pub dt_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_extent")]
    pub map_extent_m: f64,
    /// Vehicle whose pose anchors the fused BEV frame; defaults to the first agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego: Option<ActorId>,
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub rsus: Vec<RsuSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<ScriptedQuery>,
    /// Tick at which the scenario's scripted occlusion is in effect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion_tick: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDocument {
    schema_version: u32,
    scenario: Scenario,
}

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

impl Scenario {
    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Validation(m));
        if !(self.dt_s > 0.0) {
            return bad(format!("dt_s must be positive, got {}", self.dt_s));
        }
        if !(self.duration_s >= self.dt_s) {
            return bad(format!("duration_s {} shorter than dt_s {}", self.duration_s, self.dt_s));
        }
        if !(self.map_extent_m > 0.0) {
            return bad("map_extent_m must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for id in self.actors.iter().map(|a| a.id).chain(self.rsus.iter().map(|r| r.id)) {
            if !ids.insert(id) {
                return bad(format!("duplicate actor id {id}"));
            }
        }
        for a in &self.actors {
            let (l, w) = a.footprint();
            if !(l > 0.0 && w > 0.0) {
                return bad(format!("actor {} footprint must be positive", a.id));
            }
            let finite = [a.x, a.y, a.yaw, a.speed].iter().all(|v| v.is_finite())
                && a.waypoints.iter().flatten().all(|v| v.is_finite())
                && a.speed_profile.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return bad(format!("actor {} has non-finite values", a.id));
            }
            if a.speed < 0.0 || a.speed_profile.iter().any(|p| p[1] < 0.0) {
                return bad(format!("actor {} has negative speed", a.id));
            }
            if let Some(cfg) = &a.sensor {
                cfg.validate().map_err(WorldError::Validation)?;
            }
        }
        for r in &self.rsus {
            if let Some(cfg) = &r.sensor {
                cfg.validate().map_err(WorldError::Validation)?;
            }
        }
        if let Some(ego) = self.ego {
            if !self.actors.iter().any(|a| a.id == ego) {
                return bad(format!("ego {ego} is not an actor"));
            }
        } else if self.actors.is_empty() {
            return bad("scenario has no actors".into());
        }
        Ok(())
    }

    /// Number of steps before the scenario ends.
    pub fn tick_count(&self) -> u64 {
        (self.duration_s / self.dt_s + 1e-9).floor() as u64
    }

    pub fn ego_id(&self) -> ActorId {
        self.ego
            .or_else(|| self.actors.iter().find(|a| a.agent).map(|a| a.id))
            .unwrap_or_else(|| self.actors[0].id)
    }

    pub fn actor(&self, id: ActorId) -> Option<&ActorSpec> {
        self.actors.iter().find(|a| a.id == id)
    }

    /// Ids of every sensing node: agent vehicles (ego always included) and RSUs.
    pub fn sensing_ids(&self) -> Vec<ActorId> {
        let ego = self.ego_id();
        let mut ids: Vec<ActorId> = self
            .actors
            .iter()
            .filter(|a| a.agent || a.id == ego)
            .map(|a| a.id)
            .collect();
        ids.extend(self.rsus.iter().map(|r| r.id));
        ids
    }

    pub fn to_document(&self) -> String {
        let doc = ScenarioDocument {
            schema_version: SCENARIO_SCHEMA_VERSION,
            scenario: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("scenario serializes")
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario, WorldError> {
    let doc: ScenarioDocument =
        serde_json::from_str(text).map_err(|e| WorldError::Schema(e.to_string()))?;
    if doc.schema_version != SCENARIO_SCHEMA_VERSION {
        return Err(WorldError::Schema(format!(
            "unsupported schema_version {}",
            doc.schema_version
        )));
    }
    doc.scenario.validate()?;
    Ok(doc.scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: ActorId,
    pub kind: ObjectClass,
    pub position: [f64; 2],
    pub yaw: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    #[serde(default)]
    pub violation: bool,
    /// Index of the next waypoint to reach.
    #[serde(default)]
    pub waypoint_index: usize,
}

impl ActorState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position[0], self.position[1], self.yaw)
    }

    pub fn footprint(&self) -> OrientedRect {
        OrientedRect::new(self.position, self.yaw, self.length, self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub time_s: f64,
    pub actors: Vec<ActorState>,
}

impl WorldState {
    pub fn initial(scenario: &Scenario) -> Self {
        let actors = scenario
            .actors
            .iter()
            .map(|a| {
                let (length, width) = a.footprint();
                let yaw = match a.waypoints.first() {
                    Some(wp) if distance(*wp, [a.x, a.y]) > 1e-9 => (wp[1] - a.y).atan2(wp[0] - a.x),
                    _ => a.yaw,
                };
                ActorState {
                    id: a.id,
                    kind: a.kind,
                    position: [a.x, a.y],
                    yaw,
                    speed: a.speed_at(0.0),
                    length,
                    width,
                    violation: a.violation,
                    waypoint_index: 0,
                }
            })
            .collect();
        WorldState {
            tick: 0,
            time_s: 0.0,
            actors,
        }
    }

    pub fn actor(&self, id: ActorId) -> Option<&ActorState> {
        self.actors.iter().find(|a| a.id == id)
    }
}

/// Advances every actor by one tick.
pub fn step_world(state: &WorldState, scenario: &Scenario) -> Result<WorldState, WorldError> {
    if state.tick >= scenario.tick_count() {
        return Err(WorldError::EndOfScenario(state.tick));
    }
    let dt = scenario.dt_s;
    let next_tick = state.tick + 1;
    let next_time = next_tick as f64 * dt;
    let actors = state
        .actors
        .iter()
        .map(|actor| {
            let spec = scenario
                .actor(actor.id)
                .ok_or_else(|| WorldError::Validation(format!("unknown actor {}", actor.id)))?;
            Ok(advance(actor, spec, state.time_s, dt, next_time))
        })
        .collect::<Result<Vec<_>, WorldError>>()?;
    Ok(WorldState {
        tick: next_tick,
        time_s: next_time,
        actors,
    })
}

fn advance(actor: &ActorState, spec: &ActorSpec, now: f64, dt: f64, next_time: f64) -> ActorState {
    let mut out = actor.clone();
    let speed = spec.speed_at(now);
    let mut travel = speed * dt;
    if spec.waypoints.is_empty() {
        let (s, c) = actor.yaw.sin_cos();
        out.position = [actor.position[0] + c * travel, actor.position[1] + s * travel];
        out.speed = spec.speed_at(next_time);
        return out;
    }
    while travel > 0.0 && out.waypoint_index < spec.waypoints.len() {
        let target = spec.waypoints[out.waypoint_index];
        let gap = distance(out.position, target);
        if gap > 1e-12 {
            out.yaw = (target[1] - out.position[1]).atan2(target[0] - out.position[0]);
        }
        if gap <= travel {
            out.position = target;
            travel -= gap;
            out.waypoint_index += 1;
        } else {
            let f = travel / gap;
            out.position = [
                out.position[0] + (target[0] - out.position[0]) * f,
                out.position[1] + (target[1] - out.position[1]) * f,
            ];
            travel = 0.0;
        }
    }
    out.speed = if out.waypoint_index >= spec.waypoints.len() {
        0.0
    } else {
        spec.speed_at(next_time)
    };
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub tick: u64,
    pub actor_a: ActorId,
    pub actor_b: ActorId,
    pub overlap_m: f64,
}

/// One event per overlapping footprint pair, `actor_a < actor_b`.
pub fn detect_collisions(state: &WorldState) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    for (i, a) in state.actors.iter().enumerate() {
        let fa = a.footprint();
        for b in &state.actors[i + 1..] {
            // cheap reject on circumscribed circles
            if distance(a.position, b.position) > fa.circumradius() + b.footprint().circumradius() {
                continue;
            }
            if let Some(depth) = fa.penetration(&b.footprint()) {
                let (lo, hi) = if a.id < b.id { (a.id, b.id) } else { (b.id, a.id) };
                events.push(CollisionEvent {
                    tick: state.tick,
                    actor_a: lo,
                    actor_b: hi,
                    overlap_m: depth,
                });
            }
        }
    }
    events.sort_by_key(|e| (e.actor_a, e.actor_b));
    events
}

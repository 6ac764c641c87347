//! Bundled scenario fixtures and the generated evaluation suites.

use crate::geom::Pose;
use crate::world::{load_scenario, ActorSpec, ObjectClass, RsuSpec, Scenario, ScriptedQuery};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BUNDLED: [(&str, &str); 3] = [
    ("straight_road_clear", include_str!("../data/scenarios/straight_road_clear.json")),
    ("scripted_rear_end", include_str!("../data/scenarios/scripted_rear_end.json")),
    ("occlusion_t_junction", include_str!("../data/scenarios/occlusion_t_junction.json")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// A bundled scenario by name.
pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| load_scenario(text).expect("bundled scenario is valid"))
}

fn actor(id: u32, kind: ObjectClass, x: f64, y: f64) -> ActorSpec {
    ActorSpec {
        id,
        kind,
        x,
        y,
        yaw: 0.0,
        speed: 0.0,
        speed_profile: vec![],
        waypoints: vec![],
        length: None,
        width: None,
        agent: false,
        violation: false,
        sensor: None,
    }
}

fn clear_of(placed: &[[f64; 2]], p: [f64; 2], gap: f64) -> bool {
    placed.iter().all(|q| (q[0] - p[0]).hypot(q[1] - p[1]) >= gap)
}

/// Distance from `p` to the ego's straight path from the origin to `(x_end, 0)`.
fn off_path(p: [f64; 2], x_end: f64) -> f64 {
    (p[0] - p[0].clamp(0.0, x_end)).hypot(p[1])
}

/// Ten seeded scenes where parked trucks hide road users from the ego. A
/// second vehicle and a roadside unit watch from opposite corners.
pub fn occlusion_suite(seed: u64) -> Vec<Scenario> {
    (0..10u64).map(|i| occlusion_scene(seed, i)).collect()
}

fn occlusion_scene(seed: u64, index: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(index));
    let mut actors = Vec::new();
    let mut ego = actor(1, ObjectClass::Car, 0.0, 0.0);
    ego.agent = true;
    ego.speed = 1.5;
    ego.waypoints = vec![[12.0, 0.0]];
    actors.push(ego);
    let mut placed: Vec<[f64; 2]> = vec![[0.0, 0.0], [9.0, 0.0]];

    let corner = rng.random_range(0..4u32);
    let (sx, sy) = match corner {
        0 => (1.0, 1.0),
        1 => (-1.0, 1.0),
        2 => (-1.0, -1.0),
        _ => (1.0, -1.0),
    };
    let mut helper = actor(2, ObjectClass::Car, 17.0 * sx, 15.0 * sy);
    helper.agent = true;
    helper.yaw = rng.random_range(-3.0..3.0);
    placed.push([helper.x, helper.y]);
    actors.push(helper);
    let rsu_at = [-17.0 * sx, -15.0 * sy];
    placed.push(rsu_at);

    let mut id = 3;
    for _ in 0..3 {
        for _ in 0..500 {
            let bearing: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let r = rng.random_range(7.0..11.0);
            let p = [r * bearing.cos(), r * bearing.sin()];
            if clear_of(&placed, p, 9.0) && off_path(p, 12.0) >= 7.0 {
                let mut t = actor(id, ObjectClass::Truck, p[0], p[1]);
                t.yaw = bearing + std::f64::consts::FRAC_PI_2;
                placed.push(p);
                actors.push(t);
                id += 1;
                break;
            }
        }
    }
    let kinds = [ObjectClass::Car, ObjectClass::Van, ObjectClass::Pedestrian, ObjectClass::Car];
    let mut targets = 0;
    for _ in 0..400 {
        if targets == 8 {
            break;
        }
        let p = [rng.random_range(-21.0..21.0), rng.random_range(-21.0..21.0)];
        if !clear_of(&placed, p, 7.0) || off_path(p, 12.0) < 5.0 {
            continue;
        }
        let mut a = actor(id, kinds[targets % kinds.len()], p[0], p[1]);
        a.yaw = rng.random_range(-3.0..3.0);
        placed.push(p);
        actors.push(a);
        id += 1;
        targets += 1;
    }
    Scenario {
        id: format!("occlusion_{index:02}"),
        duration_s: 6.0,
        dt_s: 0.1,
        seed: seed.wrapping_add(index),
        map_extent_m: 100.0,
        ego: Some(1),
        actors,
        rsus: vec![RsuSpec {
            id: 50,
            x: rsu_at[0],
            y: rsu_at[1],
            yaw: 0.0,
            sensor: None,
        }],
        queries: vec![],
        occlusion_tick: Some(0),
    }
}

/// One driver question per mission, used by the sweep suite.
pub const MISSION_QUESTIONS: [&str; 8] = [
    "is it safe to change lanes now",
    "how is the weather and visibility",
    "how busy is the traffic ahead",
    "did anyone run the red light",
    "will the truck ahead hit me",
    "who is at fault if we crash",
    "why did the lead vehicle slow down",
    "what is the situation around me",
];

/// Car-following episodes with a braking lead vehicle. Odd episodes brake
/// hard enough to end in a rear-end collision; a red-light runner crosses
/// in every third one.
pub fn sweep_suite(count: usize) -> Vec<Scenario> {
    (0..count).map(sweep_scene).collect()
}

fn sweep_scene(i: usize) -> Scenario {
    let f = i as f64;
    let gap = 26.0 + 3.0 * (i % 4) as f64;
    let ego_speed = 11.0 + (i % 3) as f64;
    let lead_kind = if i.is_multiple_of(2) { ObjectClass::Truck } else { ObjectClass::Van };
    let mut ego = actor(1, ObjectClass::Car, 0.0, 0.0);
    ego.agent = true;
    ego.speed = ego_speed;
    ego.waypoints = vec![[400.0, 0.0]];
    let mut lead = actor(2, lead_kind, gap, 0.0);
    lead.speed = ego_speed - 1.0;
    lead.waypoints = vec![[400.0, 0.0]];
    let brake_at = 1.5 + 0.25 * (i % 3) as f64;
    let final_speed = if i % 2 == 1 { 0.0 } else { ego_speed - 1.0 };
    lead.speed_profile = vec![[brake_at, ego_speed - 1.0], [brake_at + 1.0, final_speed]];
    // clean episodes: the ego-side slowdown comes from a following agent gap
    if i.is_multiple_of(2) {
        ego.speed_profile = vec![[brake_at, ego_speed], [brake_at + 1.5, ego_speed - 1.0]];
    }
    let mut side = actor(3, ObjectClass::Car, 10.0 + f, -7.0);
    side.agent = true;
    side.speed = ego_speed - 0.5;
    side.waypoints = vec![[400.0, -7.0]];
    let mut actors = vec![ego, lead, side, actor(4, ObjectClass::Pedestrian, 60.0, 10.0)];
    if i.is_multiple_of(3) {
        let mut runner = actor(5, ObjectClass::Car, 45.0, -40.0);
        runner.speed = 9.0;
        runner.violation = true;
        runner.waypoints = vec![[45.0, -11.0], [45.0, -10.5]];
        actors.push(runner);
    }
    let queries = MISSION_QUESTIONS
        .iter()
        .enumerate()
        .map(|(k, text)| ScriptedQuery {
            tick: 4 + 5 * ((k + i) % 8) as u64,
            text: text.to_string(),
        })
        .collect();
    Scenario {
        id: format!("sweep_{i:02}"),
        duration_s: 8.0,
        dt_s: 0.1,
        seed: 100 + i as u64,
        map_extent_m: 400.0,
        ego: Some(1),
        actors,
        rsus: vec![RsuSpec {
            id: 50,
            x: 40.0,
            y: 9.0,
            yaw: Pose::default().yaw,
            sensor: None,
        }],
        queries,
        occlusion_tick: None,
    }
}

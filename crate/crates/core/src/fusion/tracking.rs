//! Greedy nearest-neighbor tracker with an alpha-beta filter.

use crate::geom::{distance, wrap_angle};
use crate::sensing::Detection3D;
use crate::world::ObjectClass;
use serde::{Deserialize, Serialize};

const HISTORY_LEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub gate_m: f64,
    pub max_age: u32,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate_m: 2.0,
            max_age: 5,
            alpha: 0.6,
            beta: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u32,
    pub class: ObjectClass,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub yaw: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    pub length: f64,
    pub width: f64,
    pub history: Vec<(u64, [f64; 2])>,
    /// Frames since the last associated detection.
    pub age: u32,
    #[serde(default)]
    pub violation: bool,
}

impl Track {
    pub fn spawn(track_id: u32, det: &Detection3D, tick: u64) -> Self {
        Self {
            track_id,
            class: det.class,
            position: det.center,
            velocity: [0.0, 0.0],
            yaw: det.yaw,
            speed: 0.0,
            yaw_rate: 0.0,
            length: det.length,
            width: det.width,
            history: vec![(tick, det.center)],
            age: 0,
            violation: det.violation,
        }
    }

    /// Constant-velocity prediction `dt` seconds ahead.
    pub fn predicted(&self, dt: f64) -> [f64; 2] {
        [
            self.position[0] + self.velocity[0] * dt,
            self.position[1] + self.velocity[1] * dt,
        ]
    }

    fn push_history(&mut self, tick: u64) {
        if self.history.last().is_some_and(|(t, _)| *t >= tick) {
            return;
        }
        self.history.push((tick, self.position));
        if self.history.len() > HISTORY_LEN {
            self.history.remove(0);
        }
    }
}

/// Owns the live track set and the id counter.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u32,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self::with_first_id(config, 1)
    }

    pub fn with_first_id(config: TrackerConfig, first_id: u32) -> Self {
        Self {
            config,
            tracks: Vec::new(),
            next_id: first_id,
        }
    }

    pub fn from_tracks(config: TrackerConfig, tracks: Vec<Track>) -> Self {
        let next_id = tracks.iter().map(|t| t.track_id + 1).max().unwrap_or(1);
        Self { config, tracks, next_id }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Associates `dets` with the live tracks and returns, per detection, the
    /// id of the track it now belongs to.
    pub fn update(&mut self, dets: &[Detection3D], tick: u64, dt_s: f64) -> Vec<u32> {
        let cfg = self.config;
        let predictions: Vec<[f64; 2]> = self.tracks.iter().map(|t| t.predicted(dt_s)).collect();

        let mut candidates = Vec::new();
        for (ti, track) in self.tracks.iter().enumerate() {
            for (di, det) in dets.iter().enumerate() {
                if det.class != track.class {
                    continue;
                }
                let d = distance(predictions[ti], det.center);
                if d <= cfg.gate_m {
                    candidates.push((d, ti, di));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_match: Vec<Option<usize>> = vec![None; self.tracks.len()];
        let mut det_track: Vec<Option<u32>> = vec![None; dets.len()];
        for (_, ti, di) in candidates {
            if track_match[ti].is_some() || det_track[di].is_some() {
                continue;
            }
            track_match[ti] = Some(di);
            det_track[di] = Some(self.tracks[ti].track_id);
        }

        for (ti, track) in self.tracks.iter_mut().enumerate() {
            let pred = predictions[ti];
            match track_match[ti] {
                Some(di) => {
                    let det = &dets[di];
                    let residual = [det.center[0] - pred[0], det.center[1] - pred[1]];
                    track.position = [pred[0] + cfg.alpha * residual[0], pred[1] + cfg.alpha * residual[1]];
                    if dt_s > 0.0 {
                        track.velocity[0] += cfg.beta / dt_s * residual[0];
                        track.velocity[1] += cfg.beta / dt_s * residual[1];
                    }
                    let yaw_pred = track.yaw + track.yaw_rate * dt_s;
                    let yaw_residual = wrap_angle(det.yaw - yaw_pred);
                    track.yaw = wrap_angle(yaw_pred + cfg.alpha * yaw_residual);
                    if dt_s > 0.0 {
                        track.yaw_rate += cfg.beta / dt_s * yaw_residual;
                    }
                    track.speed = track.velocity[0].hypot(track.velocity[1]);
                    track.length = det.length;
                    track.width = det.width;
                    track.violation |= det.violation;
                    track.age = 0;
                }
                None => {
                    track.position = pred;
                    track.yaw = wrap_angle(track.yaw + track.yaw_rate * dt_s);
                    track.age += 1;
                }
            }
            track.push_history(tick);
        }
        self.tracks.retain(|t| t.age <= cfg.max_age);

        for (di, det) in dets.iter().enumerate() {
            if det_track[di].is_none() {
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.push(Track::spawn(id, det, tick));
                det_track[di] = Some(id);
            }
        }
        det_track.into_iter().map(|t| t.expect("every detection assigned")).collect()
    }
}

/// Functional form of [`Tracker::update`].
pub fn update_tracks(tracks: Vec<Track>, dets: &[Detection3D], tick: u64, dt_s: f64) -> Vec<Track> {
    let mut tracker = Tracker::from_tracks(TrackerConfig::default(), tracks);
    tracker.update(dets, tick, dt_s);
    tracker.tracks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64) -> Detection3D {
        Detection3D {
            class: ObjectClass::Car,
            center: [x, y],
            yaw: 0.0,
            length: 4.0,
            width: 2.0,
            confidence: 0.9,
            speed: 0.0,
            violation: false,
            peripheral: false,
            track_id: None,
        }
    }

    fn moving_track() -> Track {
        let mut t = Track::spawn(7, &det(0.0, 0.0), 0);
        t.velocity = [1.0, 0.0];
        t.speed = 1.0;
        t
    }

    #[test]
    fn first_detection_spawns_track() {
        let tracks = update_tracks(vec![], &[det(3.0, 4.0)], 0, 0.1);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].age, 0);
        assert_eq!(tracks[0].position, [3.0, 4.0]);
    }

    #[test]
    fn detection_on_prediction_is_associated() {
        let mut tracker = Tracker::from_tracks(TrackerConfig::default(), vec![moving_track()]);
        let ids = tracker.update(&[det(0.1, 0.0)], 1, 0.1);
        assert_eq!(ids, vec![7]);
        let t = &tracker.tracks()[0];
        assert!((t.position[0] - 0.1).abs() < 1e-12);
        assert!((t.velocity[0] - 1.0).abs() < 1e-12);
        assert_eq!(tracker.tracks().len(), 1);
    }

    #[test]
    fn stale_track_dropped() {
        let mut t = moving_track();
        t.age = 6;
        assert!(update_tracks(vec![t], &[], 1, 0.1).is_empty());
        let mut young = moving_track();
        young.age = 2;
        let kept = update_tracks(vec![young], &[], 1, 0.1);
        assert_eq!(kept[0].age, 3);
    }

    #[test]
    fn alpha_beta_converges_on_constant_velocity() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        for k in 0..60u64 {
            let x = 2.0 * k as f64 * 0.1;
            tracker.update(&[det(x, 0.0)], k, 0.1);
        }
        let t = &tracker.tracks()[0];
        assert!((t.velocity[0] - 2.0).abs() < 1e-3, "{:?}", t.velocity);
        assert!(t.history.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn greedy_prefers_closest_pair() {
        let a = Track::spawn(1, &det(0.0, 0.0), 0);
        let b = Track::spawn(2, &det(1.5, 0.0), 0);
        let mut tracker = Tracker::from_tracks(TrackerConfig::default(), vec![a, b]);
        let ids = tracker.update(&[det(1.4, 0.0), det(0.2, 0.0)], 1, 0.1);
        assert_eq!(ids, vec![2, 1]);
    }
}

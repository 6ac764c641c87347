use super::Mission;
use crate::fusion::{nearest_detection, PerceptionProduct, EGO_TRACK_ID};
use crate::geom::distance;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub ttc_weight: f64,
    pub proximity_weight: f64,
    pub violation_weight: f64,
    /// TTC at which the TTC term reaches zero.
    pub ttc_scale_s: f64,
    /// Distance at which the proximity term reaches zero.
    pub proximity_scale_m: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            ttc_weight: 0.5,
            proximity_weight: 0.3,
            violation_weight: 0.2,
            ttc_scale_s: 5.0,
            proximity_scale_m: 10.0,
        }
    }
}

/// Unweighted risk terms, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskComponents {
    pub ttc_term: f64,
    pub proximity_term: f64,
    pub violation_term: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskScore {
    pub value: f64,
    pub components: RiskComponents,
    pub weights: [f64; 3],
    pub min_ttc_s: Option<f64>,
    /// Track pair behind `min_ttc_s`.
    pub ttc_pair: Option<(u32, u32)>,
    pub nearest: Option<(u32, f64)>,
    pub violators: Vec<u32>,
}

impl RiskScore {
    pub fn weighted(&self) -> [f64; 3] {
        [
            self.weights[0] * self.components.ttc_term,
            self.weights[1] * self.components.proximity_term,
            self.weights[2] * self.components.violation_term,
        ]
    }

    /// Passive mission chosen by the largest weighted term (ties favor TTC,
    /// then proximity).
    pub fn dominant_mission(&self) -> Mission {
        let [t, p, v] = self.weighted();
        if t >= p && t >= v {
            Mission::AccidentPrediction
        } else if p >= v {
            Mission::SafetyEvaluation
        } else {
            Mission::TrafficViolation
        }
    }

    /// The hazard tag that best explains the score.
    pub fn primary_hazard(&self) -> &'static str {
        let [t, p, v] = self.weighted();
        if t <= 0.0 && p <= 0.0 && v <= 0.0 {
            "hazard:none"
        } else if t >= p && t >= v {
            "hazard:collision"
        } else if p >= v {
            "hazard:proximity"
        } else {
            "hazard:violation"
        }
    }

    /// The non-ego track most implicated, if any.
    pub fn focus_track(&self) -> Option<u32> {
        if let Some((a, b)) = self.ttc_pair {
            return Some(if a == EGO_TRACK_ID { b } else { a });
        }
        self.violators
            .first()
            .copied()
            .or(self.nearest.map(|(id, _)| id))
    }
}

/// `clamp(w_t·max(0, 1 − ttc/5) + w_p·max(0, 1 − d/10) + w_v·violation, 0, 1)`.
pub fn compute_risk_intensity(p: &PerceptionProduct, cfg: &RiskConfig) -> RiskScore {
    let closest = p
        .collisions
        .iter()
        .min_by(|a, b| a.ttc_s.total_cmp(&b.ttc_s).then((a.track_a, a.track_b).cmp(&(b.track_a, b.track_b))));
    let ttc_term = closest.map_or(0.0, |c| (1.0 - c.ttc_s / cfg.ttc_scale_s).max(0.0));
    let nearest = nearest_detection(p);
    let proximity_term = nearest.map_or(0.0, |(_, d)| (1.0 - d / cfg.proximity_scale_m).max(0.0));
    let violators: Vec<u32> = p
        .tracks
        .iter()
        .filter(|t| t.violation && t.track_id != EGO_TRACK_ID)
        .map(|t| t.track_id)
        .collect();
    let violation_term = if violators.is_empty() { 0.0 } else { 1.0 };
    let components = RiskComponents {
        ttc_term,
        proximity_term,
        violation_term,
    };
    let weights = [cfg.ttc_weight, cfg.proximity_weight, cfg.violation_weight];
    let value = (weights[0] * ttc_term + weights[1] * proximity_term + weights[2] * violation_term).clamp(0.0, 1.0);
    RiskScore {
        value,
        components,
        weights,
        min_ttc_s: closest.map(|c| c.ttc_s),
        ttc_pair: closest.map(|c| (c.track_a, c.track_b)),
        nearest,
        violators,
    }
}

/// Relevance tags describing a scene for corpus matching.
pub fn derive_tags(mission: Mission, p: &PerceptionProduct, risk: &RiskScore) -> Vec<String> {
    let mut tags = vec![mission.tag(), risk.primary_hazard().to_string()];
    if let Some((a, b)) = risk.ttc_pair {
        let class = |id| p.track(id).map(|t| t.class.name().to_lowercase());
        if let (Some(ca), Some(cb)) = (class(a), class(b)) {
            let (lo, hi) = if ca <= cb { (ca, cb) } else { (cb, ca) };
            tags.push(format!("pair:{lo}-{hi}"));
        }
    }
    let ego = p.ego_pose.position();
    let mut classes: Vec<String> = p
        .detections
        .iter()
        .filter(|d| !d.peripheral && distance(d.center, ego) <= 20.0)
        .map(|d| format!("class:{}", d.class.name().to_lowercase()))
        .collect();
    classes.sort();
    classes.dedup();
    tags.extend(classes);
    if !risk.violators.is_empty() {
        tags.push("violation".into());
    }
    tags
}

//! Frozen reference rater for alert quality.

use crate::fusion::PerceptionProduct;
use crate::reasoning::{EvidenceRef, Mission, SafetyAlert};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const RATER_VERSION: &str = "reference-rater-v1";

/// An alert must precede any collision it cites by at least this much.
pub const TIMELY_MARGIN_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rating {
    Good,
    Middle,
    Normal,
    Bad,
}

impl Rating {
    pub const ALL: [Rating; 4] = [Rating::Good, Rating::Middle, Rating::Normal, Rating::Bad];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// What perception knew at one tick.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TickEvidence {
    pub tracks: BTreeSet<u32>,
    /// `(a, b)` with `a < b` → predicted time to collision.
    pub collisions: BTreeMap<(u32, u32), f64>,
}

/// Per-tick perception evidence for one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTruth {
    pub ticks: BTreeMap<u64, TickEvidence>,
}

impl EpisodeTruth {
    pub fn record(&mut self, p: &PerceptionProduct) {
        self.ticks.insert(
            p.tick,
            TickEvidence {
                tracks: p.tracks.iter().map(|t| t.track_id).collect(),
                collisions: p.collisions.iter().map(|c| ((c.track_a, c.track_b), c.ttc_s)).collect(),
            },
        );
    }
}

/// Good: grounded, specific and timely. Middle: grounded and specific.
/// Normal: grounded only. Bad: ungrounded or built from the fallback template.
pub fn rate_alert(alert: &SafetyAlert, truth: &EpisodeTruth) -> Rating {
    let Some(ev) = truth.ticks.get(&alert.tick) else {
        return Rating::Bad;
    };
    let exists = |r: &EvidenceRef| match *r {
        EvidenceRef::Track(id) => ev.tracks.contains(&id),
        EvidenceRef::Collision(a, b) => ev.collisions.contains_key(&(a.min(b), a.max(b))),
    };
    let grounded = !alert.fallback && !alert.evidence.is_empty() && alert.evidence.iter().all(exists);
    if !grounded {
        return Rating::Bad;
    }
    let specific = alert.evidence.iter().any(|r| matches!(r, EvidenceRef::Track(_)));
    let timely = alert.evidence.iter().all(|r| match *r {
        EvidenceRef::Collision(a, b) => ev.collisions[&(a.min(b), a.max(b))] + 1e-9 >= TIMELY_MARGIN_S,
        EvidenceRef::Track(_) => true,
    });
    match (specific, timely) {
        (true, true) => Rating::Good,
        (true, false) => Rating::Middle,
        (false, _) => Rating::Normal,
    }
}

/// Bucket counts per mission; every mission is present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingHistogram {
    pub counts: BTreeMap<Mission, [u64; 4]>,
}

impl Default for RatingHistogram {
    fn default() -> Self {
        Self {
            counts: Mission::ALL.iter().map(|m| (*m, [0; 4])).collect(),
        }
    }
}

impl RatingHistogram {
    pub fn add(&mut self, mission: Mission, rating: Rating) {
        self.counts.entry(mission).or_insert([0; 4])[rating.index()] += 1;
    }

    pub fn merge(&mut self, other: &RatingHistogram) {
        for (m, c) in &other.counts {
            let mine = self.counts.entry(*m).or_insert([0; 4]);
            for i in 0..4 {
                mine[i] += c[i];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flatten().sum()
    }

    /// Bucket shares of one mission in percent (zeros when it has no alerts).
    pub fn percentages(&self, mission: Mission) -> [f64; 4] {
        let c = self.counts.get(&mission).copied().unwrap_or([0; 4]);
        let n: u64 = c.iter().sum();
        if n == 0 {
            return [0.0; 4];
        }
        c.map(|v| 100.0 * v as f64 / n as f64)
    }

    /// Share of all rated alerts in `rating`, in percent.
    pub fn overall_pct(&self, rating: Rating) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        let k: u64 = self.counts.values().map(|c| c[rating.index()]).sum();
        100.0 * k as f64 / n as f64
    }
}

pub fn rate_alerts(alerts: &[SafetyAlert], truth: &EpisodeTruth) -> RatingHistogram {
    let mut h = RatingHistogram::default();
    for a in alerts {
        h.add(a.mission, rate_alert(a, truth));
    }
    h
}

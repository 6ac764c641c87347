//! Input bundling, passive triggering and active-query classification.

use super::alert::AlertMode;
use super::risk::{derive_tags, RiskScore};
use super::{short_digest, Mission, ReasoningError};
use crate::fusion::PerceptionProduct;
use serde::{Deserialize, Serialize};

pub const DIALOGUE_TAIL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Driver,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: Speaker,
    pub tick: u64,
    pub text: String,
}

/// Header handed to every downstream stage for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBundle {
    pub episode_id: String,
    pub tick: u64,
    pub digest: String,
    pub perception: PerceptionProduct,
    pub dialogue_tail: Vec<DialogueTurn>,
    pub label_refs: Vec<String>,
}

pub fn build_input_bundle(
    episode_id: &str,
    perception: Option<&PerceptionProduct>,
    dialogue: &[DialogueTurn],
    labels: &[String],
) -> Result<InputBundle, ReasoningError> {
    let p = perception.ok_or(ReasoningError::MissingPerception)?;
    let start = dialogue.len().saturating_sub(DIALOGUE_TAIL);
    Ok(InputBundle {
        episode_id: episode_id.to_string(),
        tick: p.tick,
        digest: short_digest(&format!("{episode_id}:{}", p.tick)),
        perception: p.clone(),
        dialogue_tail: dialogue[start..].to_vec(),
        label_refs: labels.to_vec(),
    })
}

/// A unit of reasoning work: one per decision frame at most.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryJob {
    pub mode: AlertMode,
    pub mission: Mission,
    pub tick: u64,
    /// The driver's utterance for active jobs.
    pub text: Option<String>,
    pub tags: Vec<String>,
    pub risk: RiskScore,
    /// Position on the corpus clock, which keeps running across episodes.
    pub corpus_tick: u64,
}

/// Threshold-plus-cooldown trigger for system-initiated alerts.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveMonitor {
    pub threshold: f64,
    pub cooldown_s: f64,
    last_fire_s: Option<f64>,
}

impl PassiveMonitor {
    pub fn new(threshold: f64, cooldown_s: f64) -> Result<Self, ReasoningError> {
        let mut m = Self {
            threshold: 0.0,
            cooldown_s,
            last_fire_s: None,
        };
        m.set_threshold(threshold)?;
        Ok(m)
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<(), ReasoningError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ReasoningError::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        self.threshold = threshold;
        Ok(())
    }

    pub fn last_fire_s(&self) -> Option<f64> {
        self.last_fire_s
    }

    /// Would a job fire for `risk` at `now_s`? Does not arm the cooldown.
    pub fn would_fire(&self, risk: f64, now_s: f64) -> bool {
        // tolerance keeps e.g. 0.7 computed as 0.69999999 on the firing side
        let hot = risk + 1e-12 >= self.threshold;
        let cooled = self.last_fire_s.is_none_or(|t| now_s - t + 1e-9 >= self.cooldown_s);
        hot && cooled
    }

    pub fn poll(&mut self, bundle: &InputBundle, risk: &RiskScore, now_s: f64, corpus_tick: u64) -> Option<QueryJob> {
        if !self.would_fire(risk.value, now_s) {
            return None;
        }
        self.last_fire_s = Some(now_s);
        let mission = risk.dominant_mission();
        Some(QueryJob {
            mode: AlertMode::Passive,
            mission,
            tick: bundle.tick,
            text: None,
            tags: derive_tags(mission, &bundle.perception, risk),
            risk: risk.clone(),
            corpus_tick,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RubricRule {
    mission: Mission,
    keywords: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct RubricFile {
    version: String,
    default: Mission,
    rules: Vec<RubricRule>,
}

/// Keyword table mapping utterances to missions. First matching rule wins;
/// keywords match whole words (multi-word keywords match a word run).
#[derive(Debug, Clone)]
pub struct MissionRubric {
    pub version: String,
    default: Mission,
    rules: Vec<(Mission, Vec<Vec<String>>)>,
}

const BUNDLED_RUBRIC: &str = include_str!("../../data/mission_rubric.json");

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

impl MissionRubric {
    pub fn from_json(text: &str) -> Result<Self, ReasoningError> {
        let file: RubricFile =
            serde_json::from_str(text).map_err(|e| ReasoningError::Config(format!("mission rubric: {e}")))?;
        let rules = file
            .rules
            .into_iter()
            .map(|r| (r.mission, r.keywords.iter().map(|k| words(k)).filter(|k| !k.is_empty()).collect()))
            .collect();
        Ok(Self {
            version: file.version,
            default: file.default,
            rules,
        })
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_RUBRIC).expect("bundled rubric parses")
    }

    pub fn classify(&self, text: &str) -> Mission {
        let w = words(text);
        for (mission, keywords) in &self.rules {
            if keywords.iter().any(|k| w.windows(k.len()).any(|win| win == k.as_slice())) {
                return *mission;
            }
        }
        self.default
    }
}

impl Default for MissionRubric {
    fn default() -> Self {
        Self::bundled()
    }
}

pub fn submit_active_query(
    bundle: &InputBundle,
    text: &str,
    rubric: &MissionRubric,
    risk: &RiskScore,
    corpus_tick: u64,
) -> Result<QueryJob, ReasoningError> {
    if text.trim().is_empty() {
        return Err(ReasoningError::EmptyQuery);
    }
    let mission = rubric.classify(text);
    Ok(QueryJob {
        mode: AlertMode::Active,
        mission,
        tick: bundle.tick,
        text: Some(text.trim().to_string()),
        tags: derive_tags(mission, &bundle.perception, risk),
        risk: risk.clone(),
        corpus_tick,
    })
}

//! Per-tick decision records and the end-of-episode corpus update.

use super::alert::{AlertMode, SafetyAlert};
use super::corpus::{BoxOutcome, CorpusBox, CorpusStore};
use super::llm::Decision;
use super::risk::RiskScore;
use super::{Mission, ReasoningError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFrame {
    pub tick: u64,
    pub mission: Mission,
    /// Set when a job ran on this tick.
    pub mode: Option<AlertMode>,
    pub tags: Vec<String>,
    pub prompt_digest: Option<String>,
    pub decision: Option<Decision>,
    pub risk: RiskScore,
    pub alert: Option<SafetyAlert>,
    /// Error surfaced to the driver for a failed active query.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EpisodeOutcome {
    Clean,
    Collision { tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalConfig {
    /// Fraction of candidate boxes committed.
    pub rate: f64,
    /// Candidates drawn from a clean episode.
    pub k: usize,
    /// Offset of this episode on the corpus clock.
    pub epoch: u64,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        Self {
            rate: 0.5,
            k: 2,
            epoch: 0,
        }
    }
}

fn summarize(frame: &DecisionFrame) -> String {
    let decision = frame
        .decision
        .as_ref()
        .map_or("no model call".to_string(), |d| format!("{} ({})", d.final_text, d.severity));
    format!(
        "{} at tick {}: risk {:.3} ({}); decision: {}",
        frame.mission.label(),
        frame.tick,
        frame.risk.value,
        frame.risk.primary_hazard(),
        decision
    )
}

/// Number of candidates committed at renewal rate `rate`.
pub fn commit_count(rate: f64, candidates: usize) -> usize {
    // guard against 0.3 * 10 landing a hair above 3
    ((rate * candidates as f64 - 1e-9).ceil().max(0.0) as usize).min(candidates)
}

/// Clean episodes propose their `k` riskiest frames as success boxes; a
/// collision proposes the single frame nearest the impact as a failure box.
/// The riskiest `⌈rate·n⌉` proposals are committed.
pub fn finalize_episode(
    episode_id: &str,
    frames: &[DecisionFrame],
    outcome: EpisodeOutcome,
    store: &mut CorpusStore,
    cfg: &RenewalConfig,
) -> Result<Vec<CorpusBox>, ReasoningError> {
    if !(0.0..=1.0).contains(&cfg.rate) {
        return Err(ReasoningError::Config(format!("renewal rate {} outside [0, 1]", cfg.rate)));
    }
    let (candidates, box_outcome): (Vec<&DecisionFrame>, BoxOutcome) = match outcome {
        EpisodeOutcome::Clean => {
            let mut ranked: Vec<&DecisionFrame> = frames.iter().collect();
            ranked.sort_by(|a, b| b.risk.value.total_cmp(&a.risk.value).then(a.tick.cmp(&b.tick)));
            ranked.truncate(cfg.k);
            (ranked, BoxOutcome::Success)
        }
        EpisodeOutcome::Collision { tick } => {
            let nearest = frames.iter().min_by_key(|f| (f.tick.abs_diff(tick), f.tick));
            (nearest.into_iter().collect(), BoxOutcome::Failure)
        }
    };
    let n = commit_count(cfg.rate, candidates.len());
    let mut committed = Vec::with_capacity(n);
    for frame in candidates.into_iter().take(n) {
        let mut tags = frame.tags.clone();
        if !tags.contains(&frame.mission.tag()) {
            tags.insert(0, frame.mission.tag());
        }
        let b = CorpusBox {
            box_id: format!("{episode_id}-t{:05}", frame.tick),
            mission: frame.mission,
            summary_text: summarize(frame),
            relevance_tags: tags,
            created_tick: cfg.epoch + frame.tick,
            outcome: box_outcome,
            payload_ref: format!("{episode_id}#{}", frame.prompt_digest.as_deref().unwrap_or("-")),
        };
        if store.append(b.clone())? {
            committed.push(b);
        }
    }
    Ok(committed)
}

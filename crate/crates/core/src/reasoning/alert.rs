use super::bundle::QueryJob;
use super::llm::{Decision, LlmError};
use super::ReasoningError;
use crate::fusion::EGO_TRACK_ID;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlertMode {
    Active,
    Passive,
}

impl AlertMode {
    pub fn name(self) -> &'static str {
        match self {
            AlertMode::Active => "active",
            AlertMode::Passive => "passive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Caution,
    Warning,
    Critical,
}

impl Severity {
    /// Risk bands: [0, .1) Info, [.1, .3) Caution, [.3, .6) Warning, else Critical.
    pub fn from_risk(value: f64) -> Severity {
        if value < 0.1 {
            Severity::Info
        } else if value < 0.3 {
            Severity::Caution
        } else if value < 0.6 {
            Severity::Warning
        } else {
            Severity::Critical
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "info" => Ok(Severity::Info),
            "caution" => Ok(Severity::Caution),
            "warning" => Ok(Severity::Warning),
            "critical" => Ok(Severity::Critical),
            other => Err(format!("unknown severity {other:?}")),
        }
    }
}

/// A perception object an alert points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceRef {
    Track(u32),
    Collision(u32, u32),
}

impl EvidenceRef {
    pub fn collision(a: u32, b: u32) -> Self {
        if a <= b {
            EvidenceRef::Collision(a, b)
        } else {
            EvidenceRef::Collision(b, a)
        }
    }
}

impl fmt::Display for EvidenceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvidenceRef::Track(id) => write!(f, "track:{id}"),
            EvidenceRef::Collision(a, b) => write!(f, "collision:{a}-{b}"),
        }
    }
}

impl FromStr for EvidenceRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad evidence ref {s:?}");
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        match kind {
            "track" => rest.parse().map(EvidenceRef::Track).map_err(|_| bad()),
            "collision" => {
                let (a, b) = rest.split_once('-').ok_or_else(bad)?;
                let a = a.parse().map_err(|_| bad())?;
                let b = b.parse().map_err(|_| bad())?;
                Ok(EvidenceRef::collision(a, b))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyAlert {
    pub alert_id: String,
    pub mode: AlertMode,
    pub mission: super::Mission,
    pub severity: Severity,
    pub text: String,
    pub evidence: Vec<EvidenceRef>,
    pub tick: u64,
    /// Built from a template because the model call failed.
    pub fallback: bool,
}

/// Evidence the risk score itself can vouch for.
pub(crate) fn risk_evidence(job: &QueryJob) -> Vec<EvidenceRef> {
    let mut refs = Vec::new();
    if let Some((a, b)) = job.risk.ttc_pair {
        refs.push(EvidenceRef::collision(a, b));
    }
    if let Some(id) = job.risk.focus_track().filter(|&id| id != EGO_TRACK_ID && id != u32::MAX) {
        refs.push(EvidenceRef::Track(id));
    }
    refs
}

fn fallback_text(job: &QueryJob) -> String {
    let track = job
        .risk
        .focus_track()
        .filter(|&id| id != u32::MAX)
        .map_or("none".to_string(), |id| id.to_string());
    match job.risk.min_ttc_s {
        Some(ttc) => format!("hazard: TTC {ttc:.1}s with track {track}"),
        None => format!("hazard: TTC n/a with track {track}"),
    }
}

/// Turns a model decision into an alert. Passive jobs never fail: any model
/// error becomes a template alert marked `fallback`. Active jobs hand the
/// error back to the caller.
pub fn emit_alert(decision: Result<&Decision, &LlmError>, job: &QueryJob) -> Result<SafetyAlert, ReasoningError> {
    let alert_id = format!("{}-t{:05}", job.mode.name(), job.tick);
    match decision {
        Ok(d) => Ok(SafetyAlert {
            alert_id,
            mode: job.mode,
            mission: job.mission,
            severity: d.severity,
            text: d.final_text.clone(),
            evidence: d.refs.clone(),
            tick: job.tick,
            fallback: false,
        }),
        Err(e) if job.mode == AlertMode::Active => Err(ReasoningError::Llm(e.clone())),
        Err(_) => Ok(SafetyAlert {
            alert_id,
            mode: job.mode,
            mission: job.mission,
            severity: Severity::from_risk(job.risk.value),
            text: fallback_text(job),
            evidence: risk_evidence(job),
            tick: job.tick,
            fallback: true,
        }),
    }
}

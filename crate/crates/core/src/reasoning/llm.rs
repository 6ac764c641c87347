//! Model client contract, the step-by-step response protocol and the
//! deterministic in-process mock.

use super::alert::{EvidenceRef, Severity};
use super::prompt::PromptBundle;
use super::Mission;
use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

pub const MOCK_RUBRIC_VERSION: &str = "mock-rubric-v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("model call timed out")]
    Timeout,
    #[error("malformed model response: {0}")]
    Parse(String),
    #[error("transport: {0}")]
    Transport(String),
}

/// Prompt text in, plain text out.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, LlmError>;

    fn name(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub steps: Vec<String>,
    pub final_text: String,
    pub severity: Severity,
    pub refs: Vec<EvidenceRef>,
}

fn parse_final(body: &str) -> Result<(Severity, String, Vec<EvidenceRef>), LlmError> {
    let mut parts = body.split('|').map(str::trim);
    let severity = parts
        .next()
        .unwrap_or_default()
        .parse::<Severity>()
        .map_err(LlmError::Parse)?;
    let text = parts.next().unwrap_or_default().to_string();
    let mut refs = Vec::new();
    if let Some(r) = parts.next() {
        let list = r
            .strip_prefix("refs=")
            .ok_or_else(|| LlmError::Parse(format!("expected refs=..., got {r:?}")))?;
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty() && *s != "none") {
            refs.push(item.parse().map_err(LlmError::Parse)?);
        }
    }
    if parts.next().is_some() {
        return Err(LlmError::Parse("too many fields in FINAL".into()));
    }
    Ok((severity, text, refs))
}

/// Parses `STEP 1: ...` lines followed by a closing `FINAL: ...` line.
/// Unlabelled lines continue the previous step; text before the first step
/// is ignored.
pub fn parse_cot(text: &str) -> Result<Decision, LlmError> {
    let mut steps: Vec<String> = Vec::new();
    let mut fin = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if fin.is_some() {
            return Err(LlmError::Parse("text after FINAL line".into()));
        }
        if let Some(body) = line.strip_prefix("FINAL:") {
            fin = Some(parse_final(body)?);
        } else if let Some(rest) = line.strip_prefix("STEP ") {
            let (n, body) = rest
                .split_once(':')
                .ok_or_else(|| LlmError::Parse(format!("step without ':' in {line:?}")))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| LlmError::Parse(format!("bad step number in {line:?}")))?;
            if n != steps.len() + 1 {
                return Err(LlmError::Parse(format!("expected STEP {}, got STEP {n}", steps.len() + 1)));
            }
            steps.push(body.trim().to_string());
        } else if let Some(last) = steps.last_mut() {
            last.push(' ');
            last.push_str(line);
        }
    }
    let (severity, final_text, refs) = fin.ok_or_else(|| LlmError::Parse("missing FINAL line".into()))?;
    Ok(Decision {
        steps,
        final_text,
        severity,
        refs,
    })
}

pub fn invoke_llm(client: &dyn LlmClient, prompt: &PromptBundle, cot: bool, timeout: Duration) -> Result<Decision, LlmError> {
    let mut p = prompt.clone();
    p.cot = cot;
    let reply = client.complete(&p.render(), timeout)?;
    parse_cot(&reply)
}

/// Rule-table stand-in for a model. Reads the TASK and CORPUS SAMPLES
/// sections of the prompt and answers by (mission, risk band, evidence).
///
/// Evidence handling: with no evidence ids the answer cites nothing. With
/// evidence but fewer than `support_needed` sampled boxes sharing the job's
/// pattern it cites only the collision pair. With enough stored support it
/// also names the track. The pattern is the hazard tag plus the `pair:` tag,
/// or plus the mission tag when the job has no pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MockLlm {
    /// Simulated response time, compared against the caller's timeout.
    pub latency: Duration,
    pub support_needed: usize,
}

impl Default for MockLlm {
    fn default() -> Self {
        Self {
            latency: Duration::from_millis(50),
            support_needed: 4,
        }
    }
}

fn field<'a>(task: &'a str, key: &str) -> Option<&'a str> {
    task.lines().find_map(|l| l.strip_prefix(key)).map(str::trim)
}

fn advice(sev: Severity) -> &'static str {
    match sev {
        Severity::Info => "no action needed",
        Severity::Caution => "stay attentive",
        Severity::Warning => "reduce speed and keep distance",
        Severity::Critical => "brake now",
    }
}

impl MockLlm {
    pub fn respond(&self, prompt: &str) -> String {
        let task = prompt.split("=== TASK ===").nth(1).unwrap_or_default();
        let samples = prompt
            .split("=== CORPUS SAMPLES ===")
            .nth(1)
            .and_then(|s| s.split("=== TASK ===").next())
            .unwrap_or_default();
        let mission = field(task, "MISSION:")
            .and_then(|m| m.split_whitespace().next())
            .and_then(Mission::parse)
            .unwrap_or(Mission::TrafficSituation);
        let risk: f64 = field(task, "RISK:")
            .and_then(|r| r.split_whitespace().next())
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.0);
        let hazard = field(task, "HAZARD:").unwrap_or("hazard:none");
        let evidence: Vec<EvidenceRef> = field(task, "EVIDENCE:")
            .unwrap_or("none")
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect();
        let cot = field(prompt, "COT:") != Some("disabled");

        let mission_tag = mission.tag();
        let pattern = field(task, "TAGS:")
            .and_then(|t| t.split(',').find(|t| t.starts_with("pair:")))
            .map(str::to_string)
            .unwrap_or(mission_tag);
        let support = samples
            .lines()
            .filter_map(|l| l.strip_prefix("- [").and_then(|l| l.split(" tags=").nth(1)))
            .filter(|tags| {
                let tags: Vec<&str> = tags.split(',').collect();
                tags.contains(&hazard) && tags.contains(&pattern.as_str())
            })
            .count();

        let severity = Severity::from_risk(risk);
        let refs: Vec<EvidenceRef> = if evidence.is_empty() {
            vec![]
        } else if support < self.support_needed {
            evidence.iter().copied().filter(|e| matches!(e, EvidenceRef::Collision(..))).collect()
        } else {
            evidence.clone()
        };
        let refs_text = if refs.is_empty() {
            "none".to_string()
        } else {
            refs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
        };

        let mut out = String::new();
        if cot {
            out.push_str(&format!(
                "STEP 1: Mission is {}; risk {risk:.3} falls in the {severity} band.\n",
                mission.label().to_lowercase()
            ));
            out.push_str(&format!("STEP 2: Evidence in view: {refs_text}.\n"));
            out.push_str(&format!("STEP 3: {support} stored cases share the {hazard} pattern.\n"));
        }
        out.push_str(&format!(
            "FINAL: {severity} | {}: {} | refs={refs_text}\n",
            mission.label(),
            advice(severity)
        ));
        out
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, LlmError> {
        if self.latency > timeout {
            return Err(LlmError::Timeout);
        }
        Ok(self.respond(prompt))
    }

    fn name(&self) -> String {
        MOCK_RUBRIC_VERSION.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reasoning::{generate_prompt, AlertMode, QueryJob, RiskScore};

    fn job(value: f64) -> QueryJob {
        QueryJob {
            mode: AlertMode::Passive,
            mission: Mission::AccidentPrediction,
            tick: 0,
            text: None,
            tags: vec![],
            risk: RiskScore { value, ttc_pair: Some((0, 2)), min_ttc_s: Some(3.75), ..RiskScore::default() },
            corpus_tick: 0,
        }
    }

    #[test]
    fn mock_band_caution() {
        let p = generate_prompt(&job(0.25), &[], &[], &[], 16000);
        let d = invoke_llm(&MockLlm::default(), &p, true, Duration::from_secs(10)).unwrap();
        assert_eq!(d.severity, Severity::Caution);
        assert_eq!(d.steps.len(), 3);
        assert_eq!(d.refs, vec![EvidenceRef::Collision(0, 2)]);
    }

    #[test]
    fn cot_off_has_no_steps() {
        let p = generate_prompt(&job(0.25), &[], &[], &[], 16000);
        let d = invoke_llm(&MockLlm::default(), &p, false, Duration::from_secs(10)).unwrap();
        assert!(d.steps.is_empty());
    }

    #[test]
    fn slow_mock_times_out() {
        let p = generate_prompt(&job(0.25), &[], &[], &[], 16000);
        let slow = MockLlm { latency: Duration::from_secs(11), ..MockLlm::default() };
        assert_eq!(invoke_llm(&slow, &p, true, Duration::from_secs(10)).unwrap_err(), LlmError::Timeout);
    }

    #[test]
    fn missing_final_rejected() {
        assert!(matches!(parse_cot("STEP 1: look\nSTEP 2: think\n"), Err(LlmError::Parse(_))));
    }

    #[test]
    fn step_numbers_must_count_up() {
        assert!(parse_cot("STEP 1: a\nSTEP 3: b\nFINAL: Info | ok").is_err());
        assert!(parse_cot("STEP 1: a\nFINAL: Info | ok\nmore").is_err());
    }

    #[test]
    fn parse_round_trip() {
        let d = parse_cot("preamble\nSTEP 1: a\n  continued\nSTEP 2: b\nFINAL: Warning | slow down | refs=track:3,collision:0-3").unwrap();
        assert_eq!(d.steps, vec!["a continued", "b"]);
        assert_eq!(d.severity, Severity::Warning);
        assert_eq!(d.refs, vec![EvidenceRef::Track(3), EvidenceRef::Collision(0, 3)]);
        assert!(parse_cot("FINAL: Severe | x").is_err());
    }
}

use super::alert::{emit_alert, SafetyAlert};
use super::bundle::{build_input_bundle, submit_active_query, DialogueTurn, MissionRubric, PassiveMonitor, Speaker};
use super::corpus::{sample_corpus, CorpusBox, CorpusStore, SampleConfig};
use super::episode::{finalize_episode, DecisionFrame, EpisodeOutcome, RenewalConfig};
use super::llm::{invoke_llm, LlmClient};
use super::prompt::{generate_prompt, PromptLevel};
use super::risk::{compute_risk_intensity, derive_tags, RiskConfig};
use super::{AlertMode, ReasoningError};
use crate::fusion::PerceptionProduct;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningConfig {
    pub episode_id: String,
    pub threshold: f64,
    pub cooldown_s: f64,
    pub risk: RiskConfig,
    pub level: PromptLevel,
    pub cot: bool,
    pub timeout: Duration,
    pub sample: SampleConfig,
    /// Episode offset on the corpus clock.
    pub corpus_epoch: u64,
    pub cache_len: usize,
    pub raw_len: usize,
    /// Candidate boxes per clean episode.
    pub renewal_k: usize,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        Self {
            episode_id: "episode".into(),
            threshold: 0.35,
            cooldown_s: 3.0,
            risk: RiskConfig::default(),
            level: PromptLevel::Middle,
            cot: true,
            timeout: Duration::from_secs(10),
            sample: SampleConfig::default(),
            corpus_epoch: 0,
            cache_len: 8,
            raw_len: 3,
            renewal_k: RenewalConfig::default().k,
        }
    }
}

fn raw_record(p: &PerceptionProduct) -> String {
    let mut s = format!("t{} ego=({:.1},{:.1}) tracks=[", p.tick, p.ego_pose.x, p.ego_pose.y);
    for (i, t) in p.tracks.iter().filter(|t| t.track_id != crate::fusion::EGO_TRACK_ID).enumerate() {
        if i > 0 {
            s.push_str("; ");
        }
        let _ = write!(
            s,
            "{}:{} ({:.1},{:.1}) v={:.1}{}",
            t.track_id,
            t.class.name().to_lowercase(),
            t.position[0],
            t.position[1],
            t.speed,
            if t.violation { " violation" } else { "" }
        );
    }
    s.push_str("] collisions=[");
    for (i, c) in p.collisions.iter().enumerate() {
        if i > 0 {
            s.push_str("; ");
        }
        let _ = write!(s, "{}-{}@{:.2}s", c.track_a, c.track_b, c.ttc_s);
    }
    s.push(']');
    s
}

fn push_capped(q: &mut VecDeque<String>, item: String, cap: usize) {
    q.push_back(item);
    while q.len() > cap {
        q.pop_front();
    }
}

/// Per-episode reasoning state, stepped once per tick. At most one job runs
/// per tick: a passive trigger wins and queued driver questions wait.
pub struct ReasoningLoop {
    pub config: ReasoningConfig,
    rubric: MissionRubric,
    monitor: PassiveMonitor,
    dialogue: Vec<DialogueTurn>,
    cache: VecDeque<String>,
    raw: VecDeque<String>,
    pending: VecDeque<String>,
    frames: Vec<DecisionFrame>,
    alerts: Vec<SafetyAlert>,
}

impl ReasoningLoop {
    pub fn new(config: ReasoningConfig, rubric: MissionRubric) -> Result<Self, ReasoningError> {
        let monitor = PassiveMonitor::new(config.threshold, config.cooldown_s)?;
        Ok(Self {
            config,
            rubric,
            monitor,
            dialogue: Vec::new(),
            cache: VecDeque::new(),
            raw: VecDeque::new(),
            pending: VecDeque::new(),
            frames: Vec::new(),
            alerts: Vec::new(),
        })
    }

    /// Takes effect on the next step.
    pub fn set_threshold(&mut self, value: f64) -> Result<(), ReasoningError> {
        self.monitor.set_threshold(value)?;
        self.config.threshold = value;
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.monitor.threshold
    }

    /// Queues a driver question for the next free tick.
    pub fn submit_query(&mut self, text: &str) -> Result<(), ReasoningError> {
        if text.trim().is_empty() {
            return Err(ReasoningError::EmptyQuery);
        }
        self.pending.push_back(text.trim().to_string());
        Ok(())
    }

    pub fn pending_queries(&self) -> usize {
        self.pending.len()
    }

    pub fn frames(&self) -> &[DecisionFrame] {
        &self.frames
    }

    pub fn alerts(&self) -> &[SafetyAlert] {
        &self.alerts
    }

    pub fn dialogue(&self) -> &[DialogueTurn] {
        &self.dialogue
    }

    pub fn rubric(&self) -> &MissionRubric {
        &self.rubric
    }

    pub fn step(
        &mut self,
        p: &PerceptionProduct,
        now_s: f64,
        client: &dyn LlmClient,
        store: &CorpusStore,
    ) -> Result<&DecisionFrame, ReasoningError> {
        if self.frames.last().is_some_and(|f| f.tick >= p.tick) {
            return Err(ReasoningError::Config(format!("tick {} already decided", p.tick)));
        }
        let risk = compute_risk_intensity(p, &self.config.risk);
        push_capped(&mut self.raw, raw_record(p), self.config.raw_len);
        let labels: Vec<String> = self.raw.iter().map(|r| r.split(' ').next().unwrap_or("").to_string()).collect();
        let bundle = build_input_bundle(&self.config.episode_id, Some(p), &self.dialogue, &labels)?;
        let corpus_tick = self.config.corpus_epoch + p.tick;

        let job = match self.monitor.poll(&bundle, &risk, now_s, corpus_tick) {
            Some(job) => Some(job),
            None => match self.pending.pop_front() {
                Some(text) => Some(submit_active_query(&bundle, &text, &self.rubric, &risk, corpus_tick)?),
                None => None,
            },
        };

        let mut frame = DecisionFrame {
            tick: p.tick,
            mission: risk.dominant_mission(),
            mode: None,
            tags: Vec::new(),
            prompt_digest: None,
            decision: None,
            risk: risk.clone(),
            alert: None,
            error: None,
        };
        match job {
            None => frame.tags = derive_tags(frame.mission, p, &risk),
            Some(job) => {
                if let Some(q) = &job.text {
                    self.dialogue.push(DialogueTurn {
                        speaker: Speaker::Driver,
                        tick: p.tick,
                        text: q.clone(),
                    });
                }
                let sampled = sample_corpus(store, &job, self.config.level.k(), &self.config.sample);
                let cache: Vec<String> = self.cache.iter().cloned().collect();
                let raw: Vec<String> = self.raw.iter().cloned().collect();
                let prompt = generate_prompt(&job, &sampled, &cache, &raw, self.config.level.budget_chars());
                let result = invoke_llm(client, &prompt, self.config.cot, self.config.timeout);
                frame.mission = job.mission;
                frame.mode = Some(job.mode);
                frame.tags = job.tags.clone();
                frame.prompt_digest = Some(prompt.digest());
                match emit_alert(result.as_ref(), &job) {
                    Ok(alert) => {
                        self.dialogue.push(DialogueTurn {
                            speaker: Speaker::System,
                            tick: p.tick,
                            text: alert.text.clone(),
                        });
                        push_capped(
                            &mut self.cache,
                            format!("t{} {} alert {}: {}", p.tick, job.mode.name(), alert.severity, alert.text),
                            self.config.cache_len,
                        );
                        self.alerts.push(alert.clone());
                        frame.alert = Some(alert);
                    }
                    Err(e) => {
                        debug_assert_eq!(job.mode, AlertMode::Active);
                        self.dialogue.push(DialogueTurn {
                            speaker: Speaker::System,
                            tick: p.tick,
                            text: format!("error: {e}"),
                        });
                        frame.error = Some(e.to_string());
                    }
                }
                frame.decision = result.ok();
            }
        }
        push_capped(
            &mut self.cache,
            format!("t{} risk {:.3} {}", p.tick, risk.value, risk.primary_hazard()),
            self.config.cache_len,
        );
        self.frames.push(frame);
        Ok(self.frames.last().expect("just pushed"))
    }

    pub fn finalize(
        &self,
        outcome: EpisodeOutcome,
        store: &mut CorpusStore,
        renewal_rate: f64,
    ) -> Result<Vec<CorpusBox>, ReasoningError> {
        let cfg = RenewalConfig {
            rate: renewal_rate,
            k: self.config.renewal_k,
            epoch: self.config.corpus_epoch,
        };
        finalize_episode(&self.config.episode_id, &self.frames, outcome, store, &cfg)
    }
}

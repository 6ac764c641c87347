//! Prompt assembly from raw records, the episode cache and sampled boxes.

use super::alert::risk_evidence;
use super::bundle::QueryJob;
use super::corpus::ScoredBox;
use super::short_digest;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;

pub const EMPTY_RAW: &str = "[no raw records]";
pub const EMPTY_CACHE: &str = "[no cache entries]";
pub const EMPTY_BOXES: &str = "[no corpus samples]";

pub const SYSTEM_PREAMBLE: &str = "You are a driving-safety assistant fed by cooperative perception from vehicles \
and roadside units. Ground every statement in the listed evidence ids. Be brief.";

/// Prompt size presets: character budget and number of sampled boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptLevel {
    Mini,
    Middle,
    High,
}

impl PromptLevel {
    pub const ALL: [PromptLevel; 3] = [PromptLevel::Mini, PromptLevel::Middle, PromptLevel::High];

    pub fn budget_chars(self) -> usize {
        match self {
            PromptLevel::Mini => 4000,
            PromptLevel::Middle => 16000,
            PromptLevel::High => 48000,
        }
    }

    pub fn k(self) -> usize {
        match self {
            PromptLevel::Mini => 1,
            PromptLevel::Middle => 5,
            PromptLevel::High => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptLevel::Mini => "mini",
            PromptLevel::Middle => "middle",
            PromptLevel::High => "high",
        }
    }
}

impl FromStr for PromptLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptLevel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown prompt level {s:?} (mini, middle, high)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    /// Oldest first.
    pub raw_backup: Vec<String>,
    /// Oldest first.
    pub temporal_cache: Vec<String>,
    /// Highest priority first.
    pub sampled_boxes: Vec<ScoredBox>,
    pub task: String,
    pub budget_chars: usize,
    pub cot: bool,
}

fn section(out: &mut String, title: &str, lines: impl Iterator<Item = String>, empty: &str) {
    let _ = writeln!(out, "=== {title} ===");
    let mut any = false;
    for l in lines {
        out.push_str(&l);
        out.push('\n');
        any = true;
    }
    if !any {
        out.push_str(empty);
        out.push('\n');
    }
}

fn render_box(b: &ScoredBox) -> String {
    let c = &b.corpus_box;
    format!(
        "- [{}] {:?} {} p={:.3} tags={}\n  {}",
        c.box_id,
        c.mission,
        serde_json::to_value(c.outcome).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        b.priority,
        c.relevance_tags.join(","),
        c.summary_text
    )
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn truncate_chars(s: &mut String, keep: usize) {
    if let Some((idx, _)) = s.char_indices().nth(keep) {
        s.truncate(idx);
    }
}

impl PromptBundle {
    pub fn render(&self) -> String {
        self.render_with(self.cot)
    }

    fn render_with(&self, cot: bool) -> String {
        let mut out = String::new();
        section(&mut out, "SYSTEM", std::iter::once(self.system.clone()), "");
        section(&mut out, "RAW BACKUP", self.raw_backup.iter().cloned(), EMPTY_RAW);
        section(&mut out, "TEMPORAL CACHE", self.temporal_cache.iter().cloned(), EMPTY_CACHE);
        section(&mut out, "CORPUS SAMPLES", self.sampled_boxes.iter().map(render_box), EMPTY_BOXES);
        section(&mut out, "TASK", std::iter::once(self.task.clone()), "");
        let _ = writeln!(out, "COT: {}", if cot { "enabled" } else { "disabled" });
        out
    }

    /// Length of the longer of the two CoT renderings.
    fn worst_len(&self) -> usize {
        char_len(&self.render_with(false))
    }

    pub fn rendered_len(&self) -> usize {
        char_len(&self.render())
    }

    pub fn digest(&self) -> String {
        short_digest(&self.render())
    }

    /// Drops boxes lowest-priority first, then raw records oldest first, then
    /// cache entries oldest first; as a last resort cuts the task, then the
    /// system text.
    fn fit(&mut self) {
        while self.worst_len() > self.budget_chars {
            if self.sampled_boxes.pop().is_some() {
                continue;
            }
            if !self.raw_backup.is_empty() {
                self.raw_backup.remove(0);
                continue;
            }
            if !self.temporal_cache.is_empty() {
                self.temporal_cache.remove(0);
                continue;
            }
            let over = self.worst_len() - self.budget_chars;
            let task_len = char_len(&self.task);
            if task_len > 0 {
                truncate_chars(&mut self.task, task_len.saturating_sub(over));
                continue;
            }
            let sys_len = char_len(&self.system);
            if sys_len == 0 {
                // the fixed skeleton alone exceeds the budget
                break;
            }
            truncate_chars(&mut self.system, sys_len.saturating_sub(over));
        }
    }
}

pub fn task_instruction(job: &QueryJob) -> String {
    let r = &job.risk;
    let evidence = risk_evidence(job);
    let evidence = if evidence.is_empty() {
        "none".to_string()
    } else {
        evidence.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
    };
    let mut t = String::new();
    let _ = writeln!(t, "MISSION: {:?} ({})", job.mission, job.mission.label());
    let _ = writeln!(t, "MODE: {}", job.mode.name());
    let _ = writeln!(t, "TICK: {}", job.tick);
    let _ = writeln!(
        t,
        "RISK: {:.3} ttc_term={:.3} proximity_term={:.3} violation_term={:.3} min_ttc={}",
        r.value,
        r.components.ttc_term,
        r.components.proximity_term,
        r.components.violation_term,
        r.min_ttc_s.map_or("n/a".to_string(), |t| format!("{t:.2}s"))
    );
    let _ = writeln!(t, "EVIDENCE: {evidence}");
    let _ = writeln!(t, "HAZARD: {}", r.primary_hazard());
    let _ = writeln!(t, "TAGS: {}", job.tags.join(","));
    if let Some(q) = &job.text {
        let _ = writeln!(t, "QUESTION: {q}");
    }
    t.push_str(
        "Answer with numbered \"STEP n:\" lines, then one line \
\"FINAL: <Info|Caution|Warning|Critical> | <advice> | refs=<comma-separated evidence ids>\".",
    );
    t
}

pub fn generate_prompt(
    job: &QueryJob,
    sampled: &[ScoredBox],
    cache: &[String],
    raw: &[String],
    budget_chars: usize,
) -> PromptBundle {
    let mut sampled = sampled.to_vec();
    sampled.sort_by(|a, b| {
        b.priority
            .total_cmp(&a.priority)
            .then(b.corpus_box.created_tick.cmp(&a.corpus_box.created_tick))
            .then(a.corpus_box.box_id.cmp(&b.corpus_box.box_id))
    });
    let mut p = PromptBundle {
        system: SYSTEM_PREAMBLE.to_string(),
        raw_backup: raw.to_vec(),
        temporal_cache: cache.to_vec(),
        sampled_boxes: sampled,
        task: task_instruction(job),
        budget_chars,
        cot: true,
    };
    p.fit();
    p
}

//! Corpus boxes, the append-only store and priority sampling.

use super::bundle::QueryJob;
use super::{Mission, ReasoningError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxOutcome {
    Success,
    Failure,
    Neutral,
}

impl BoxOutcome {
    /// Failures rank above neutral experience: near misses are instructive.
    pub fn weight(self) -> f64 {
        match self {
            BoxOutcome::Success => 1.0,
            BoxOutcome::Neutral => 0.5,
            BoxOutcome::Failure => 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusBox {
    pub box_id: String,
    pub mission: Mission,
    pub summary_text: String,
    #[serde(rename = "tags")]
    pub relevance_tags: Vec<String>,
    pub created_tick: u64,
    pub outcome: BoxOutcome,
    pub payload_ref: String,
}

/// Append-only box log with an in-memory index. Rust's borrow rules give
/// the many-readers / one-writer discipline; share behind an `RwLock` when
/// threads are involved.
#[derive(Debug, Default)]
pub struct CorpusStore {
    boxes: Vec<CorpusBox>,
    ids: HashSet<String>,
    log: Option<PathBuf>,
}

impl CorpusStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a store backed by an NDJSON log, replaying it.
    pub fn open(path: &Path) -> Result<Self, ReasoningError> {
        let mut store = Self {
            log: Some(path.to_path_buf()),
            ..Self::default()
        };
        if path.exists() {
            let f = File::open(path).map_err(|e| ReasoningError::Corpus(format!("{}: {e}", path.display())))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| ReasoningError::Corpus(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let b: CorpusBox = serde_json::from_str(&line)
                    .map_err(|e| ReasoningError::Corpus(format!("{} line {}: {e}", path.display(), n + 1)))?;
                store.insert(b);
            }
        }
        Ok(store)
    }

    fn insert(&mut self, b: CorpusBox) -> bool {
        if self.ids.contains(&b.box_id) {
            return false;
        }
        self.ids.insert(b.box_id.clone());
        self.boxes.push(b);
        true
    }

    /// Returns false (and writes nothing) when the id is already present.
    pub fn append(&mut self, b: CorpusBox) -> Result<bool, ReasoningError> {
        if b.summary_text.trim().is_empty() {
            return Err(ReasoningError::Corpus(format!("box {} has an empty summary", b.box_id)));
        }
        if self.ids.contains(&b.box_id) {
            return Ok(false);
        }
        if let Some(path) = &self.log {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| ReasoningError::Corpus(format!("{}: {e}", path.display())))?;
            let mut line = serde_json::to_string(&b).map_err(|e| ReasoningError::Corpus(e.to_string()))?;
            line.push('\n');
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| ReasoningError::Corpus(e.to_string()))?;
        }
        Ok(self.insert(b))
    }

    pub fn boxes(&self) -> &[CorpusBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusBox> {
        self.boxes.iter().find(|b| b.box_id == id)
    }

    /// The log as it would appear on disk.
    pub fn to_ndjson(&self) -> String {
        self.boxes
            .iter()
            .map(|b| serde_json::to_string(b).expect("box serializes") + "\n")
            .collect()
    }
}

impl Clone for CorpusStore {
    /// Clones the contents only; the copy is in-memory.
    fn clone(&self) -> Self {
        Self {
            boxes: self.boxes.clone(),
            ids: self.ids.clone(),
            log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub relevance_weight: f64,
    pub recency_weight: f64,
    pub outcome_weight: f64,
    pub half_life_ticks: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            relevance_weight: 0.5,
            recency_weight: 0.3,
            outcome_weight: 0.2,
            half_life_ticks: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub priority: f64,
    #[serde(flatten)]
    pub corpus_box: CorpusBox,
}

pub(crate) fn jaccard(a: &[String], b: &[String]) -> f64 {
    let a: BTreeSet<&str> = a.iter().map(String::as_str).collect();
    let b: BTreeSet<&str> = b.iter().map(String::as_str).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

pub fn box_priority(b: &CorpusBox, tags: &[String], now_tick: u64, cfg: &SampleConfig) -> f64 {
    let age = now_tick.saturating_sub(b.created_tick) as f64;
    let recency = 0.5f64.powf(age / cfg.half_life_ticks);
    cfg.relevance_weight * jaccard(tags, &b.relevance_tags)
        + cfg.recency_weight * recency
        + cfg.outcome_weight * b.outcome.weight()
}

/// Top-`k` boxes by priority; ties go to the newer box, then the smaller id.
pub fn sample_corpus(store: &CorpusStore, job: &QueryJob, k: usize, cfg: &SampleConfig) -> Vec<ScoredBox> {
    let mut scored: Vec<ScoredBox> = store
        .boxes()
        .iter()
        .map(|b| ScoredBox {
            priority: box_priority(b, &job.tags, job.corpus_tick, cfg),
            corpus_box: b.clone(),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.priority
            .total_cmp(&a.priority)
            .then(b.corpus_box.created_tick.cmp(&a.corpus_box.created_tick))
            .then(a.corpus_box.box_id.cmp(&b.corpus_box.box_id))
    });
    scored.truncate(k);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reasoning::{AlertMode, RiskScore};

    pub(crate) fn cbox(id: &str, tags: &[&str], created: u64, outcome: BoxOutcome) -> CorpusBox {
        CorpusBox {
            box_id: id.into(),
            mission: Mission::AccidentPrediction,
            summary_text: format!("summary {id}"),
            relevance_tags: tags.iter().map(|s| s.to_string()).collect(),
            created_tick: created,
            outcome,
            payload_ref: String::new(),
        }
    }

    fn job(tags: &[&str], now: u64) -> QueryJob {
        QueryJob {
            mode: AlertMode::Passive,
            mission: Mission::AccidentPrediction,
            tick: now,
            text: None,
            tags: tags.iter().map(|s| s.to_string()).collect(),
            risk: RiskScore::default(),
            corpus_tick: now,
        }
    }

    #[test]
    fn empty_store_samples_nothing() {
        assert!(sample_corpus(&CorpusStore::in_memory(), &job(&["a"], 0), 5, &SampleConfig::default()).is_empty());
    }

    #[test]
    fn ranks_by_priority() {
        // same age; priorities differ through relevance and outcome
        let mut s = CorpusStore::in_memory();
        s.append(cbox("a", &["x", "y"], 0, BoxOutcome::Success)).unwrap(); // .5 + .3 + .2 = 1.0
        s.append(cbox("b", &["z"], 0, BoxOutcome::Neutral)).unwrap(); // 0 + .3 + .1 = .4
        s.append(cbox("c", &["x"], 0, BoxOutcome::Failure)).unwrap(); // .25 + .3 + .16 = .71
        let got = sample_corpus(&s, &job(&["x", "y"], 0), 2, &SampleConfig::default());
        let ids: Vec<&str> = got.iter().map(|b| b.corpus_box.box_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert!((got[0].priority - 1.0).abs() < 1e-12);
        assert!((got[1].priority - 0.71).abs() < 1e-12);
    }

    #[test]
    fn equal_priority_prefers_newer() {
        let mut s = CorpusStore::in_memory();
        let cfg = SampleConfig { recency_weight: 0.0, ..SampleConfig::default() };
        s.append(cbox("old", &["x"], 10, BoxOutcome::Success)).unwrap();
        s.append(cbox("new", &["x"], 20, BoxOutcome::Success)).unwrap();
        let got = sample_corpus(&s, &job(&["x"], 30), 1, &cfg);
        assert_eq!(got[0].corpus_box.box_id, "new");
    }

    #[test]
    fn recency_half_life() {
        let b = cbox("a", &[], 0, BoxOutcome::Success);
        let cfg = SampleConfig { relevance_weight: 0.0, outcome_weight: 0.0, ..SampleConfig::default() };
        assert!((box_priority(&b, &[], 500, &cfg) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn duplicate_ids_skipped() {
        let mut s = CorpusStore::in_memory();
        assert!(s.append(cbox("a", &[], 0, BoxOutcome::Success)).unwrap());
        assert!(!s.append(cbox("a", &["other"], 5, BoxOutcome::Failure)).unwrap());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn log_replays() {
        let dir = std::env::temp_dir().join(format!("corpus-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corpus.ndjson");
        let _ = std::fs::remove_file(&path);
        {
            let mut s = CorpusStore::open(&path).unwrap();
            s.append(cbox("a", &["x"], 1, BoxOutcome::Success)).unwrap();
            s.append(cbox("b", &["y"], 2, BoxOutcome::Failure)).unwrap();
        }
        let s = CorpusStore::open(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), s.to_ndjson());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

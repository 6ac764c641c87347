//! Safety-reasoning loop over perception products: risk intensity, passive
//! and active querying, corpus sampling, prompt assembly, LLM invocation with
//! a step-by-step response protocol, alerting and corpus renewal.

mod alert;
mod bundle;
mod corpus;
mod episode;
mod llm;
mod prompt;
mod risk;
mod session;

pub use alert::{emit_alert, AlertMode, EvidenceRef, SafetyAlert, Severity};
pub use bundle::{
    build_input_bundle, submit_active_query, DialogueTurn, InputBundle, MissionRubric, PassiveMonitor, QueryJob,
    Speaker, DIALOGUE_TAIL,
};
pub use corpus::{box_priority, sample_corpus, BoxOutcome, CorpusBox, CorpusStore, SampleConfig, ScoredBox};
pub use episode::{commit_count, finalize_episode, DecisionFrame, EpisodeOutcome, RenewalConfig};
pub use llm::{invoke_llm, parse_cot, Decision, LlmClient, LlmError, MockLlm, MOCK_RUBRIC_VERSION};
pub use prompt::{
    generate_prompt, task_instruction, PromptBundle, PromptLevel, EMPTY_BOXES, EMPTY_CACHE, EMPTY_RAW, SYSTEM_PREAMBLE,
};
pub use risk::{compute_risk_intensity, derive_tags, RiskComponents, RiskConfig, RiskScore};
pub use session::{ReasoningConfig, ReasoningLoop};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("no perception product for the requested tick")]
    MissingPerception,
    #[error("query text is empty")]
    EmptyQuery,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("corpus store: {0}")]
    Corpus(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// The eight task categories the reasoning loop answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mission {
    SafetyEvaluation,
    DrivingCondition,
    TrafficCondition,
    TrafficViolation,
    AccidentPrediction,
    AccidentResponsibility,
    CausationAnalysis,
    TrafficSituation,
}

impl Mission {
    pub const ALL: [Mission; 8] = [
        Mission::SafetyEvaluation,
        Mission::DrivingCondition,
        Mission::TrafficCondition,
        Mission::TrafficViolation,
        Mission::AccidentPrediction,
        Mission::AccidentResponsibility,
        Mission::CausationAnalysis,
        Mission::TrafficSituation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Mission::SafetyEvaluation => "Safety evaluation",
            Mission::DrivingCondition => "Driving condition",
            Mission::TrafficCondition => "Traffic condition",
            Mission::TrafficViolation => "Traffic violation",
            Mission::AccidentPrediction => "Accident prediction",
            Mission::AccidentResponsibility => "Accident responsibility",
            Mission::CausationAnalysis => "Causation analysis",
            Mission::TrafficSituation => "Traffic situation",
        }
    }

    pub fn tag(self) -> String {
        format!("mission:{self:?}")
    }

    pub fn parse(name: &str) -> Option<Mission> {
        Mission::ALL
            .into_iter()
            .find(|m| format!("{m:?}").eq_ignore_ascii_case(name.trim()))
    }
}

pub(crate) fn short_digest(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

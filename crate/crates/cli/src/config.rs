//! Run configuration shared by `run` and `serve`.

use crate::CliError;
use sentinel_core::reasoning::PromptLevel;
use sentinel_core::runner::RunOptions;
use sentinel_core::scenarios::bundled;
use sentinel_core::world::{load_scenario, Scenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum LlmSpec {
    Mock,
    /// POST the prompt as plain text, read the answer from the body.
    Http(String),
}

impl fmt::Display for LlmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlmSpec::Mock => write!(f, "mock"),
            LlmSpec::Http(url) => write!(f, "http:{url}"),
        }
    }
}

impl FromStr for LlmSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mock" => Ok(LlmSpec::Mock),
            other => match other.strip_prefix("http:") {
                Some(url) if !url.is_empty() => Ok(LlmSpec::Http(url.to_string())),
                _ => Err(format!("llm must be `mock` or `http:<endpoint>`, got {s:?}")),
            },
        }
    }
}

impl From<LlmSpec> for String {
    fn from(s: LlmSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for LlmSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// A scenario file, or the name of a bundled scenario.
    pub scenario: String,
    pub seed: Option<u64>,
    pub threshold: f64,
    pub llm: LlmSpec,
    pub out: PathBuf,
    pub renewal_rate: f64,
    pub level: PromptLevel,
    /// Perfect sensors and a lossless link.
    pub noiseless: bool,
    /// Persistent corpus file. Without one each run starts from an empty corpus.
    pub corpus: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opts = RunOptions::default();
        Self {
            scenario: "straight_road_clear".into(),
            seed: None,
            threshold: opts.threshold,
            llm: LlmSpec::Mock,
            out: PathBuf::from("out"),
            renewal_rate: opts.renewal_rate,
            level: opts.level,
            noiseless: false,
            corpus: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.renewal_rate) {
            return Err(CliError::Config(format!("renewal rate {} outside [0, 1]", self.renewal_rate)));
        }
        Ok(())
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            threshold: self.threshold,
            renewal_rate: self.renewal_rate,
            level: self.level,
            noiseless: self.noiseless,
            ..RunOptions::default()
        }
    }
}

/// A loaded scenario and the digest of the document it came from.
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub digest: String,
}

/// Files win over bundled names.
pub fn resolve_scenario(spec: &str) -> Result<ResolvedScenario, CliError> {
    let path = Path::new(spec);
    let text = if path.exists() {
        std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?
    } else if let Some(s) = bundled(spec) {
        s.to_document()
    } else {
        return Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled scenario"),
        ));
    };
    let scenario = load_scenario(&text).map_err(|e| CliError::Config(format!("{spec}: {e}")))?;
    Ok(ResolvedScenario { scenario, digest: hex_digest(text.as_bytes()) })
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

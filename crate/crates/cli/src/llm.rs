//! Model clients selectable from the command line.

use crate::config::LlmSpec;
use sentinel_core::reasoning::{LlmClient, LlmError, MockLlm};
use std::time::Duration;

/// Plain-text completion over HTTP: the prompt is the request body and the
/// reply body is the answer.
pub struct HttpLlm {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpLlm {
    /// Builds its own blocking transport, so keep it off async executor threads.
    pub fn new(endpoint: &str) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self { endpoint: endpoint.to_string(), client })
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, LlmError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .timeout(timeout)
            .header("content-type", "text/plain; charset=utf-8")
            .body(prompt.to_string())
            .send()
            .map_err(|e| if e.is_timeout() { LlmError::Timeout } else { LlmError::Transport(e.to_string()) })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Transport(format!("{} returned {status}", self.endpoint)));
        }
        resp.text().map_err(|e| LlmError::Transport(e.to_string()))
    }

    fn name(&self) -> String {
        format!("http:{}", self.endpoint)
    }
}

pub fn make_client(spec: &LlmSpec) -> Result<Box<dyn LlmClient>, LlmError> {
    Ok(match spec {
        LlmSpec::Mock => Box::new(MockLlm::default()),
        LlmSpec::Http(url) => Box::new(HttpLlm::new(url)?),
    })
}

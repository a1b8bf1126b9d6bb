use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{self, STRICT_REMINDER};
use super::{AuxSignals, BackendError, BackendErrorKind};
use crate::descriptors::FirmwareDescriptor;
use crate::{Error, Result};

/// Environment variable holding the bearer credential for the remote backend.
pub const CREDENTIAL_ENV: &str = "FIRMRISK_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_in_flight: usize,
    #[serde(skip_serializing, default)]
    pub api_key: String,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_ms: 30_000,
            max_retries: 3,
            temperature: 0.0,
            max_in_flight: 4,
            api_key: api_key.into(),
        }
    }

    /// Reads the credential from [`CREDENTIAL_ENV`].
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self> {
        let key = std::env::var(CREDENTIAL_ENV).unwrap_or_default();
        let cfg = RemoteConfig::new(endpoint, model, key);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.endpoint.trim().is_empty() {
            return Err(Error::InvalidConfig("remote endpoint is empty".into()));
        }
        if self.api_key.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "remote backend needs a credential in {CREDENTIAL_ENV}"
            )));
        }
        if self.timeout_ms == 0 {
            return Err(Error::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// The structured object a layer must answer with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteReply {
    pub risk: f64,
    pub uncertainty: f64,
    pub reasoning_depth: u32,
    #[serde(default)]
    pub signature: Option<String>,
}

impl RemoteReply {
    fn is_valid(&self) -> bool {
        (0.0..=100.0).contains(&self.risk) && (0.0..=1.0).contains(&self.uncertainty)
    }
}

/// Result of one successful remote layer evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOutcome {
    pub risk: f64,
    pub aux: AuxSignals,
    pub retries: u32,
}

/// Scans `text` for the first well-formed JSON object that is a valid reply.
pub fn extract_reply(text: &str) -> Option<RemoteReply> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v @ Value::Object(_))) = stream.next() {
            if let Ok(r) = serde_json::from_value::<RemoteReply>(v) {
                if r.is_valid() {
                    return Some(r);
                }
            }
        }
    }
    None
}

/// First content block of a chat-completion response body.
fn reply_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let content = v.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => parts
            .iter()
            .find_map(|p| p.get("text").and_then(Value::as_str))
            .map(str::to_owned),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct RemoteClient {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Body(String),
    Retryable(BackendErrorKind),
    Fatal(BackendErrorKind),
}

impl RemoteClient {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .max_idle_connections(0)
            .build()
            .into();
        Ok(RemoteClient { cfg, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn post(&self, messages: &[Value]) -> Attempt {
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
        });
        let resp = self
            .agent
            .post(&self.cfg.endpoint)
            .header("Authorization", &format!("Bearer {}", self.cfg.api_key))
            .send_json(&body);
        match resp {
            Ok(mut r) => {
                let status = r.status().as_u16();
                let text = r.body_mut().read_to_string();
                match (status, text) {
                    (200..=299, Ok(t)) => Attempt::Body(t),
                    (200..=299, Err(e)) => Attempt::Retryable(classify(e)),
                    (429 | 500..=599, _) => Attempt::Retryable(BackendErrorKind::Status(status)),
                    (s, _) => Attempt::Fatal(BackendErrorKind::Status(s)),
                }
            }
            Err(e) => Attempt::Retryable(classify(e)),
        }
    }

    /// Sends `messages`, retrying transport failures up to `max_retries` times.
    fn exchange(&self, messages: &[Value], retries: &mut u32) -> std::result::Result<String, BackendErrorKind> {
        loop {
            match self.post(messages) {
                Attempt::Body(b) => return Ok(b),
                Attempt::Fatal(k) => return Err(k),
                Attempt::Retryable(k) => {
                    if *retries >= self.cfg.max_retries {
                        return Err(k);
                    }
                    *retries += 1;
                }
            }
        }
    }

    /// Scores one layer of `f`. One reprompt with a stricter instruction is
    /// made when the first reply cannot be parsed.
    pub fn evaluate(&self, f: &FirmwareDescriptor, layer: u8) -> std::result::Result<RemoteOutcome, BackendError> {
        let start = Instant::now();
        let mut retries = 0;
        let fail = |kind, retries, start: Instant| BackendError {
            layer,
            instance: f.id,
            retries,
            wall_latency_ms: start.elapsed().as_secs_f64() * 1e3,
            kind,
        };
        let mut messages = vec![
            json!({"role": "system", "content": prompt::system_message(layer)}),
            json!({"role": "user", "content": prompt::serialize_prompt(f, layer)}),
        ];
        let mut last_content = String::new();
        for attempt in 0..2 {
            let body = self
                .exchange(&messages, &mut retries)
                .map_err(|k| fail(k, retries, start))?;
            let content = reply_content(&body).unwrap_or_default();
            if let Some(r) = extract_reply(&content) {
                return Ok(RemoteOutcome {
                    risk: r.risk,
                    aux: AuxSignals {
                        uncertainty: r.uncertainty,
                        reasoning_depth: r.reasoning_depth,
                        wall_latency_ms: start.elapsed().as_secs_f64() * 1e3,
                        signature: r.signature,
                    },
                    retries,
                });
            }
            last_content = content;
            if attempt == 0 {
                messages.push(json!({"role": "assistant", "content": last_content}));
                messages.push(json!({"role": "user", "content": STRICT_REMINDER}));
            }
        }
        let mut snippet: String = last_content.chars().take(80).collect();
        if snippet.is_empty() {
            snippet = "<empty>".into();
        }
        Err(fail(BackendErrorKind::Unparseable(snippet), retries, start))
    }
}

fn classify(e: ureq::Error) -> BackendErrorKind {
    match e {
        ureq::Error::Timeout(_) => BackendErrorKind::Timeout,
        ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => {
            BackendErrorKind::Timeout
        }
        other => BackendErrorKind::Transport(other.to_string()),
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::schema::DecisionSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptKind {
    Initial,
    Refinement,
    FinalRetry,
}

/// One structured-decision call as seen by a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub kind: AttemptKind,
    pub system: String,
    pub prompt: String,
    /// Schema this call must satisfy; a sub-schema on refinement calls.
    pub schema: DecisionSchema,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned an unusable response: {0}")]
    BadResponse(String),
    #[error("no scripted response for request #{0}")]
    ScriptExhausted(usize),
    #[error("provider configuration error: {0}")]
    Config(String),
}

/// Anything that turns a prompt into response text. Implementations must be
/// shareable across threads; one `decide` call drives it sequentially.
pub trait DecisionProvider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

impl<P: DecisionProvider + ?Sized> DecisionProvider for std::sync::Arc<P> {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: DecisionProvider + ?Sized> DecisionProvider for Box<P> {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

/// Replays canned responses keyed by 1-based request ordinal.
#[derive(Debug)]
pub struct ScriptedProvider {
    responses: BTreeMap<usize, String>,
    next: AtomicUsize,
    calls: Mutex<Vec<ProviderRequest>>,
}

impl ScriptedProvider {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_map(
            responses
                .into_iter()
                .enumerate()
                .map(|(i, s)| (i + 1, s.into()))
                .collect(),
        )
    }

    pub fn from_map(responses: BTreeMap<usize, String>) -> Self {
        ScriptedProvider {
            responses,
            next: AtomicUsize::new(1),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Parses a fixture: a JSON object `{"1": response, ...}` or a JSON array.
    /// A response that is itself a JSON object or array is replayed as its text.
    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| ProviderError::Config(e.to_string()))?;
        let as_text = |v: &Value| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let map = match v {
            Value::Object(m) => m
                .iter()
                .map(|(k, v)| {
                    k.trim()
                        .parse::<usize>()
                        .map(|n| (n, as_text(v)))
                        .map_err(|_| ProviderError::Config(format!("bad ordinal `{k}`")))
                })
                .collect::<Result<_, _>>()?,
            Value::Array(a) => a.iter().enumerate().map(|(i, v)| (i + 1, as_text(v))).collect(),
            _ => {
                return Err(ProviderError::Config(
                    "scripted fixture must be an object or array".into(),
                ))
            }
        };
        Ok(Self::from_map(map))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Skips the first `n` ordinals, for resuming a replay.
    pub fn with_offset(self, n: usize) -> Self {
        self.next.store(n + 1, Ordering::SeqCst);
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("scripted log poisoned").len()
    }

    pub fn calls(&self) -> Vec<ProviderRequest> {
        self.calls.lock().expect("scripted log poisoned").clone()
    }
}

impl DecisionProvider for ScriptedProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let mut calls = self.calls.lock().expect("scripted log poisoned");
        let ordinal = self.next.fetch_add(1, Ordering::SeqCst);
        calls.push(request.clone());
        self.responses
            .get(&ordinal)
            .cloned()
            .ok_or(ProviderError::ScriptExhausted(ordinal))
    }
}

/// Environment variable holding the API key for [`WireProvider`].
pub const API_KEY_ENV: &str = "METAROUTE_API_KEY";

/// Client for an OpenAI-style `chat/completions` endpoint.
pub struct WireProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
    client: OnceLock<reqwest::blocking::Client>,
}

impl std::fmt::Debug for WireProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WireProvider")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl WireProvider {
    /// `endpoint` is the full URL of the chat-completions route.
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        WireProvider {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(300),
            client: OnceLock::new(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn request_body(&self, request: &ProviderRequest) -> Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.prompt},
            ],
        })
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, ProviderError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(self.client.get_or_init(|| c))
    }
}

impl DecisionProvider for WireProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let mut req = self.client()?.post(&self.endpoint).json(&self.request_body(request));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp
            .json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("HTTP {status}: {body}")));
        }
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse(format!("no message content in {body}")))
    }
}

/// Model name sent by a wire provider built from a bare `wire:URL` spec.
pub const DEFAULT_WIRE_MODEL: &str = "default";

/// Provider selection as written on a command line: `scripted:PATH` or
/// `wire:URL`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProviderSpec {
    Scripted(PathBuf),
    Wire { endpoint: String, model: String },
}

impl ProviderSpec {
    pub fn with_model(self, model: impl Into<String>) -> Self {
        match self {
            ProviderSpec::Wire { endpoint, .. } => ProviderSpec::Wire {
                endpoint,
                model: model.into(),
            },
            other => other,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn DecisionProvider>, ProviderError> {
        Ok(match self {
            ProviderSpec::Scripted(path) => Arc::new(ScriptedProvider::from_file(path)?),
            ProviderSpec::Wire { endpoint, model } => Arc::new(WireProvider::new(endpoint, model)),
        })
    }
}

impl FromStr for ProviderSpec {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("scripted", path)) if !path.is_empty() => Ok(ProviderSpec::Scripted(path.into())),
            Some(("wire", url)) if !url.is_empty() => Ok(ProviderSpec::Wire {
                endpoint: url.to_string(),
                model: DEFAULT_WIRE_MODEL.to_string(),
            }),
            _ => Err(ProviderError::Config(format!(
                "provider `{s}` is neither scripted:PATH nor wire:URL"
            ))),
        }
    }
}

impl TryFrom<String> for ProviderSpec {
    type Error = ProviderError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ProviderSpec> for String {
    fn from(p: ProviderSpec) -> String {
        p.to_string()
    }
}

impl std::fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProviderSpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
            ProviderSpec::Wire { endpoint, .. } => write!(f, "wire:{endpoint}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ProviderRequest {
        ProviderRequest {
            kind: AttemptKind::Initial,
            system: "s".into(),
            prompt: "p".into(),
            schema: DecisionSchema::default(),
        }
    }

    #[test]
    fn scripted_replays_by_ordinal() {
        let p = ScriptedProvider::from_json(r#"{"1": "a", "2": {"x": 1}}"#).unwrap();
        assert_eq!(p.complete(&req()).unwrap(), "a");
        assert_eq!(p.complete(&req()).unwrap(), r#"{"x":1}"#);
        assert_eq!(p.complete(&req()), Err(ProviderError::ScriptExhausted(3)));
        assert_eq!(p.call_count(), 3);
    }

    #[test]
    fn scripted_offset_resumes() {
        let p = ScriptedProvider::new(["a", "b", "c"]).with_offset(2);
        assert_eq!(p.complete(&req()).unwrap(), "c");
    }

    #[test]
    fn wire_body_follows_chat_convention() {
        let w = WireProvider::new("http://localhost:1/v1/chat/completions", "m");
        let body = w.request_body(&req());
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "p");
    }

    #[test]
    fn provider_specs_parse() {
        assert_eq!(
            "scripted:fixtures/a.json".parse::<ProviderSpec>().unwrap(),
            ProviderSpec::Scripted("fixtures/a.json".into())
        );
        let w: ProviderSpec = "wire:http://localhost:8000/v1/chat/completions".parse().unwrap();
        assert_eq!(w.to_string(), "wire:http://localhost:8000/v1/chat/completions");
        assert!(matches!(w.with_model("m"), ProviderSpec::Wire { model, .. } if model == "m"));
        for bad in ["scripted:", "http://x", "local:x"] {
            assert!(bad.parse::<ProviderSpec>().is_err(), "{bad}");
        }
    }
}
